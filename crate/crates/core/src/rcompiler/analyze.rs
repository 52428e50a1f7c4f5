//! Name resolution and typing: syntax trees to [`Ir`].

use std::collections::BTreeMap;

use crate::catalog;
use crate::error::{Error, Result};
use crate::lang::{self, BinOp, Expr, Literal, SetOp};
use crate::relalg::{AggFunc, Attr, AttrName, ScalarType, Scheme, Value};
use crate::rvars;
use crate::storage::{GlobalImpl, State};
use crate::typesys::{Impl, ValueType};

use super::ir::*;

const EXPANSION_LIMIT: usize = 16;

fn same_domain(a: &ScalarType, b: &ScalarType) -> bool {
    a == b || (a.is_ref() && b.is_ref())
}

fn assignable(target: &ScalarType, s: &Scalar) -> bool {
    let t = s.ty();
    s.is_null() || same_domain(target, &t) || (*target == ScalarType::Float && t == ScalarType::Integer)
}

fn retype_null(s: Scalar, t: &ScalarType) -> Scalar {
    if s.is_null() {
        Scalar::Lit(Value::Undefined, t.clone())
    } else {
        s
    }
}

fn retype_null_row(r: Row, t: &ScalarType) -> Row {
    if row_is_null(&r) {
        Row::Lit(Value::Undefined, t.clone())
    } else {
        r
    }
}

fn type_err(msg: impl Into<String>) -> Error {
    Error::ExprTypeError(msg.into())
}

fn oid_type(s: &Scheme) -> Option<String> {
    match s.attr(&AttrName::oid()).map(|a| &a.ty) {
        Some(ScalarType::Ref(t)) => Some(t.clone()),
        _ => None,
    }
}

fn attr_of(path: &[String]) -> AttrName {
    AttrName::from_segments(path.iter().cloned())
}

fn without_oid(s: &Scheme) -> Scheme {
    Scheme { attrs: s.attrs.iter().filter(|a| !a.name.is_oid()).cloned().collect(), keys: Vec::new() }
}

/// Scheme of a value of type `vt` held under `name`, without OID.
pub fn value_scheme(state: &State, name: &str, vt: &ValueType) -> Result<Scheme> {
    Scheme::new(state.types.value_attrs(name, vt)?)
}

/// Analysis environment: the context type, parameters and visible locals.
pub struct Env<'a> {
    pub state: &'a State,
    pub ctx: Option<String>,
    pub params: Vec<(String, ScalarType)>,
    pub locals: BTreeMap<String, (ValueType, Scheme)>,
}

impl<'a> Env<'a> {
    pub fn top(state: &'a State) -> Self {
        Env { state, ctx: None, params: Vec::new(), locals: BTreeMap::new() }
    }

    pub fn in_type(state: &'a State, ty: &str) -> Self {
        Env { state, ctx: Some(ty.to_string()), params: Vec::new(), locals: BTreeMap::new() }
    }

    fn ctx_attr(&self, n: &str) -> Option<ValueType> {
        let ctx = self.ctx.as_ref()?;
        let c = self.state.types.component(ctx, n).ok()?;
        if c.spec.is_attribute() {
            c.spec.ty
        } else {
            None
        }
    }

    fn is_ctx_method(&self, n: &str) -> bool {
        self.ctx
            .as_ref()
            .and_then(|ctx| self.state.types.component(ctx, n).ok())
            .is_some_and(|c| c.spec.is_method())
    }

    fn this_comp(&self, n: &str, vt: ValueType) -> Result<Ir> {
        let scheme = value_scheme(self.state, n, &vt)?;
        Ok(match vt {
            ValueType::Scalar(t) => Ir::S(Scalar::Single(Box::new(Rel::ThisComp(n.into())), AttrName::new(n), t.clone()), t),
            _ => Ir::R(Rel::ThisComp(n.into()), scheme),
        })
    }

    fn global_scheme(&self, n: &str) -> Option<Result<(ValueType, Scheme)>> {
        let g = self.state.globals.get(n)?;
        Some(value_scheme(self.state, n, &g.ty).map(|s| (g.ty.clone(), s)))
    }

    fn name(&self, n: &str) -> Result<Ir> {
        if let Some((vt, scheme)) = self.locals.get(n) {
            return Ok(match vt {
                ValueType::Scalar(t) => Ir::S(Scalar::Local(n.into(), t.clone()), t.clone()),
                _ => Ir::R(Rel::Local(n.into()), scheme.clone()),
            });
        }
        if let Some((_, t)) = self.params.iter().find(|(p, _)| p == n) {
            return Ok(Ir::S(Scalar::Param(n.into(), t.clone()), t.clone()));
        }
        if let Some(vt) = self.ctx_attr(n) {
            return self.this_comp(n, vt);
        }
        if self.is_ctx_method(n) {
            return Err(type_err(format!("method {n} needs an argument list")));
        }
        if let Some(r) = self.global_scheme(n) {
            let (vt, scheme) = r?;
            return Ok(match vt {
                ValueType::Scalar(t) => {
                    Ir::S(Scalar::Single(Box::new(Rel::Global(n.into())), AttrName::new(n), t.clone()), t)
                }
                _ => Ir::R(Rel::Global(n.into()), scheme),
            });
        }
        if self.state.types.classes.contains_key(n) {
            return Ok(Ir::R(Rel::TypeVar(n.into()), rvars::type_scheme(self.state, n)?));
        }
        if let Some(t) = catalog::table(&self.state.types, &self.state.oids, n) {
            return Ok(Ir::R(Rel::Catalog(n.into()), t.scheme().clone()));
        }
        Err(Error::UnknownName(n.to_string()))
    }

    /// Converts a relation used where a single value is expected.
    pub fn to_scalar(&self, ir: Ir) -> Result<Scalar> {
        match ir {
            Ir::S(s, _) => Ok(s),
            Ir::R(rel, sch) => {
                let data: Vec<&Attr> = sch.attrs.iter().filter(|a| !a.name.is_oid()).collect();
                let a = match (data.len(), sch.attrs.len()) {
                    (1, _) => data[0].clone(),
                    (0, 1) => sch.attrs[0].clone(),
                    _ => return Err(type_err(format!("relation {sch} used as a single value"))),
                };
                Ok(Scalar::Single(Box::new(rel), a.name, a.ty))
            }
        }
    }

    pub fn scalar(&self, e: &Expr) -> Result<Scalar> {
        let ir = self.expr(e)?;
        self.to_scalar(ir)
    }

    fn to_rel(&self, ir: Ir) -> (Rel, Scheme) {
        match ir {
            Ir::R(r, s) => (r, s),
            Ir::S(s, t) => {
                let name = AttrName::new(crate::typesys::VALUE_ATTR);
                let scheme = Scheme::new(vec![Attr::new(name.clone(), t)]).expect("one attribute");
                (Rel::FromScalar(Box::new(s), name), scheme)
            }
        }
    }

    pub fn rel(&self, e: &Expr) -> Result<(Rel, Scheme)> {
        let ir = self.expr(e)?;
        Ok(self.to_rel(ir))
    }

    fn group_of(&self, ir: Ir) -> Result<(Rel, String)> {
        match ir {
            Ir::S(s, ScalarType::Ref(t)) => Ok((Rel::Group(Box::new(s), t.clone()), t)),
            Ir::S(_, t) => Err(type_err(format!("{t} value is not a reference"))),
            Ir::R(Rel::TypeVar(t), _) => Ok((Rel::Members(t.clone()), t)),
            Ir::R(rel, sch) => {
                let t = oid_type(&sch).ok_or(Error::NoOidAttribute)?;
                let g = match rel {
                    Rel::ObjectOf(_) | Rel::Members(_) | Rel::Group(..) | Rel::AttrGroup(..) if sch.len() == 1 => rel,
                    other => Rel::ObjectOf(Box::new(other)),
                };
                Ok((g, t))
            }
        }
    }

    /// The group of objects denoted by `e`, with their common type.
    pub fn group(&self, e: &Expr) -> Result<(Rel, String)> {
        let ir = self.expr(e)?;
        self.group_of(ir)
    }

    fn group_scheme(t: &str) -> Scheme {
        Scheme::new(vec![Attr::new(AttrName::oid(), ScalarType::Ref(t.to_string()))]).expect("one attribute")
    }

    /// For `g.r` with `r` a scalar reference component, the objects `r` points to.
    fn ref_targets(base: &Expr, ir: &Ir) -> Option<(Rel, String)> {
        let (Expr::Member(_, name), Ir::R(rel, sch)) = (base, ir) else { return None };
        if sch.len() != 2 || !sch.has_oid() {
            return None;
        }
        let a = sch.attr(&AttrName::new(name.as_str()))?;
        let ScalarType::Ref(t) = &a.ty else { return None };
        Some((Rel::AttrGroup(Box::new(rel.clone()), a.name.clone(), t.clone()), t.clone()))
    }

    fn member(&self, base: &Expr, n: &str, whole: &Expr) -> Result<Ir> {
        if matches!(base, Expr::This) {
            let ctx = self.ctx.as_ref().ok_or_else(|| Error::UnknownName("this".into()))?;
            return match self.ctx_attr(n) {
                Some(vt) => self.this_comp(n, vt),
                None => Err(Error::UnknownComponent { ty: ctx.clone(), component: n.to_string() }),
            };
        }
        let unresolvable = || Error::UnresolvablePath {
            path: whole.as_path().map_or_else(|| lang::pretty::expr(whole), |p| p.join(".")),
            segment: n.to_string(),
        };
        let base_ir = self.expr(base)?;
        let (rel, sch) = match Self::ref_targets(base, &base_ir) {
            Some((g, t)) => (g, Self::group_scheme(&t)),
            None => match base_ir {
                Ir::S(s, ScalarType::Ref(t)) => {
                    let g = Rel::Group(Box::new(s), t.clone());
                    (g, Self::group_scheme(&t))
                }
                Ir::S(..) => return Err(unresolvable()),
                Ir::R(r, s) => (r, s),
            },
        };
        if let Some(t) = oid_type(&sch) {
            if let Ok(c) = self.state.types.component(&t, n) {
                if c.spec.is_method() {
                    return Err(type_err(format!("method {n} needs an argument list")));
                }
                let scheme = rvars::component_scheme(self.state, &t, n)?;
                let r = match rel {
                    Rel::TypeVar(ref tv) if *tv == t => Rel::CompVar(t.clone(), n.into()),
                    other => {
                        let (g, _) = self.group_of(Ir::R(other, sch.clone()))?;
                        Rel::Deref { group: Box::new(g), ty: t.clone(), comp: n.into() }
                    }
                };
                return Ok(Ir::R(r, scheme));
            }
        }
        let an = AttrName::new(n);
        if let Some(a) = sch.attr(&an) {
            if let ScalarType::Ref(t) = &a.ty {
                return Ok(Ir::R(Rel::AttrGroup(Box::new(rel), an, t.clone()), Self::group_scheme(t)));
            }
            let mut keep = Vec::new();
            if sch.has_oid() {
                keep.push(AttrName::oid());
            }
            keep.push(an);
            let scheme = project_scheme(&sch, &keep)?;
            return Ok(Ir::R(Rel::Project(Box::new(rel), keep), scheme));
        }
        let refined: Vec<&Attr> = sch.attrs.iter().filter(|a| a.name.strip_prefix(&an).is_some()).collect();
        if refined.is_empty() {
            return Err(unresolvable());
        }
        let mut keep = Vec::new();
        if sch.has_oid() {
            keep.push(AttrName::oid());
        }
        keep.extend(refined.iter().map(|a| a.name.clone()));
        let renames: Vec<(AttrName, AttrName)> =
            refined.iter().map(|a| (a.name.clone(), a.name.strip_prefix(&an).expect("filtered"))).collect();
        let projected = project_scheme(&sch, &keep)?;
        let scheme = rename_scheme(&projected, &renames)?;
        let defined = renames
            .iter()
            .map(|(_, to)| {
                let ty = scheme.attr(to).expect("renamed").ty.clone();
                Row::Not(Box::new(Row::IsNull(Box::new(Row::Attr(to.clone(), ty)))))
            })
            .reduce(|a, b| Row::Or(Box::new(a), Box::new(b)))
            .expect("at least one attribute");
        let r = Rel::Where(
            Box::new(Rel::Rename(Box::new(Rel::Project(Box::new(rel), keep)), renames)),
            defined,
        );
        Ok(Ir::R(r, scheme))
    }

    fn call(&self, target: Option<&Expr>, name: &str, args: &[Expr]) -> Result<Ir> {
        let (group, ty) = match target {
            None => {
                let up = name.to_ascii_uppercase();
                if (up == "GETTODAYDATE" || up == "TODAY") && args.is_empty() {
                    return Ok(Ir::S(Scalar::Today, ScalarType::Date));
                }
                if !self.is_ctx_method(name) {
                    return Err(Error::UnknownName(name.to_string()));
                }
                let ctx = self.ctx.clone().expect("checked by is_ctx_method");
                (Rel::Group(Box::new(Scalar::This(ctx.clone())), ctx.clone()), ctx)
            }
            Some(t) => {
                let base = self.expr(t)?;
                match Self::ref_targets(t, &base) {
                    Some(g) => g,
                    None => self.group_of(base)?,
                }
            }
        };
        let spec = self.state.types.component(&ty, name)?.spec;
        let params = spec
            .params
            .clone()
            .ok_or_else(|| type_err(format!("{ty}.{name} is an attribute, not a method")))?;
        if params.len() != args.len() {
            return Err(Error::ArityMismatch { method: format!("{ty}.{name}"), expected: params.len(), got: args.len() });
        }
        let mut out = Vec::new();
        for ((p, pt), a) in params.iter().zip(args) {
            let s = self.scalar(a)?;
            if !assignable(pt, &s) {
                return Err(type_err(format!("argument {p} of {name} expects {pt}, got {}", s.ty())));
            }
            out.push(retype_null(s, pt));
        }
        let mut attrs = vec![Attr::new(AttrName::oid(), ScalarType::Ref(ty.clone()))];
        if let Some(vt) = &spec.ty {
            attrs.extend(self.state.types.value_attrs(name, vt)?);
        }
        let scheme = Scheme::new(attrs)?;
        Ok(Ir::R(Rel::Call { group: Box::new(group), ty, method: name.to_string(), args: out }, scheme))
    }

    pub fn expr(&self, e: &Expr) -> Result<Ir> {
        Ok(match e {
            Expr::Lit(l) => {
                let (v, t) = literal(l);
                Ir::S(Scalar::Lit(v, t.clone()), t)
            }
            Expr::This => {
                let ctx = self.ctx.clone().ok_or_else(|| Error::UnknownName("this".into()))?;
                let t = ScalarType::Ref(ctx.clone());
                Ir::S(Scalar::This(ctx), t)
            }
            Expr::Name(n) => self.name(n)?,
            Expr::Member(b, n) => self.member(b, n, e)?,
            Expr::Call { target, name, args } => self.call(target.as_deref(), name, args)?,
            Expr::Object(inner) => {
                let ir = self.expr(inner)?;
                let (g, t) = self.group_of(ir)?;
                Ir::R(g, Self::group_scheme(&t))
            }
            Expr::Exist(inner) => match self.expr(inner)? {
                Ir::R(r, _) => Ir::S(Scalar::Exist(Box::new(r)), ScalarType::Boolean),
                Ir::S(..) => return Err(type_err("EXIST needs a relation")),
            },
            Expr::Where(base, cond) => {
                let (rel, sch) = self.rel(base)?;
                let (xrel, xsch) = self.expand_for(rel.clone(), sch.clone(), &[cond.as_ref()])?;
                let row = self.row(cond, &xsch)?;
                expect_bool_row(&row)?;
                let r = Rel::Where(Box::new(xrel), row);
                Ir::R(self.project_back(r, &sch, &xsch), sch)
            }
            Expr::Project { expr, names, drop } => {
                let (rel, sch) = self.rel(expr)?;
                let wanted: Vec<AttrName> = names.iter().map(|p| attr_of(p)).collect();
                let probes: Vec<Expr> = names.iter().map(|p| Expr::path(p)).collect();
                let (rel, sch) = if *drop {
                    (rel, sch)
                } else {
                    self.expand_for(rel, sch, &probes.iter().collect::<Vec<_>>())?
                };
                let keep: Vec<AttrName> = if *drop {
                    for n in &wanted {
                        sch.require(n)?;
                    }
                    sch.names().filter(|n| !wanted.contains(n)).cloned().collect()
                } else {
                    wanted
                };
                let scheme = project_scheme(&sch, &keep)?;
                Ir::R(Rel::Project(Box::new(rel), keep), scheme)
            }
            Expr::Rename { expr, pairs } => {
                let (rel, sch) = self.rel(expr)?;
                let pairs: Vec<(AttrName, AttrName)> = pairs.iter().map(|(a, b)| (attr_of(a), attr_of(b))).collect();
                let scheme = rename_scheme(&sch, &pairs)?;
                Ir::R(Rel::Rename(Box::new(rel), pairs), scheme)
            }
            Expr::Replace { expr, sets } => {
                let (rel, sch) = self.rel(expr)?;
                let sets = self.sets(sets, &sch)?;
                Ir::R(Rel::Replace(Box::new(rel), sets), sch)
            }
            Expr::SetOp(op, a, b) => self.set_op(*op, a, b)?,
            Expr::Summarize { expr, by, adds } => {
                let (rel, sch) = self.rel(expr)?;
                let by: Vec<AttrName> = by.iter().map(|p| attr_of(p)).collect();
                let mut attrs = Vec::new();
                for n in &by {
                    attrs.push(sch.attr(n).cloned().ok_or_else(|| Error::UnknownAttribute(n.to_string()))?);
                }
                let mut out = Vec::new();
                for a in adds {
                    let row = self.row(&a.arg, &sch)?;
                    let t = match a.func {
                        AggFunc::Sum if row.ty().is_numeric() => row.ty(),
                        AggFunc::Sum => return Err(type_err(format!("Sum over {}", row.ty()))),
                        AggFunc::Count => ScalarType::Integer,
                    };
                    let name = attr_of(&a.name);
                    attrs.push(Attr::new(name.clone(), t));
                    out.push((a.func, row, name));
                }
                Ir::R(Rel::Summarize(Box::new(rel), by, out), Scheme::new(attrs)?)
            }
            Expr::Expand(base, path) => {
                let (rel, sch) = self.rel(base)?;
                let (r, s) = self.expand(rel, &sch, &attr_of(path))?;
                Ir::R(r, s)
            }
            Expr::Ov(base, conds) => {
                let (rel, sch) = self.rel(base)?;
                if !sch.has_oid() {
                    return Err(Error::NoOidAttribute);
                }
                self.ov(rel, sch, conds)?
            }
            Expr::Binary(op, a, b) => {
                let x = self.scalar(a)?;
                let y = self.scalar(b)?;
                let s = scalar_binary(*op, x, y)?;
                let t = s.ty();
                Ir::S(s, t)
            }
            Expr::Not(a) => {
                let x = self.scalar(a)?;
                expect_bool(&x.ty())?;
                Ir::S(Scalar::Not(Box::new(x)), ScalarType::Boolean)
            }
            Expr::Neg(a) => {
                let x = self.scalar(a)?;
                if !x.ty().is_numeric() {
                    return Err(type_err(format!("cannot negate {}", x.ty())));
                }
                let t = x.ty();
                Ir::S(Scalar::Neg(Box::new(x)), t)
            }
            Expr::IsNull(a) => Ir::S(Scalar::IsNull(Box::new(self.scalar(a)?)), ScalarType::Boolean),
            Expr::IsType { expr, ty, exact } => {
                self.state.types.class(ty)?;
                let x = self.scalar(expr)?;
                if !x.ty().is_ref() {
                    return Err(type_err(format!("{} is not a reference", x.ty())));
                }
                Ir::S(Scalar::IsType(Box::new(x), ty.clone(), *exact), ScalarType::Boolean)
            }
            Expr::Tuple(fields) => {
                let mut attrs = Vec::new();
                let mut out = Vec::new();
                for (n, fe) in fields {
                    let s = self.scalar(fe)?;
                    attrs.push(Attr::new(AttrName::new(n.as_str()), s.ty()));
                    out.push((AttrName::new(n.as_str()), s));
                }
                Ir::R(Rel::Tuple(out), Scheme::new(attrs)?)
            }
        })
    }

    fn ov(&self, rel: Rel, sch: Scheme, conds: &[Expr]) -> Result<Ir> {
        let refs: Vec<&Expr> = conds.iter().collect();
        let (xrel, xsch) = self.expand_for(rel, sch.clone(), &refs)?;
        let mut rows = Vec::new();
        for c in conds {
            let r = self.row(c, &xsch)?;
            expect_bool_row(&r)?;
            rows.push(r);
        }
        let r = Rel::Ov(Box::new(xrel), rows);
        Ok(Ir::R(self.project_back(r, &sch, &xsch), sch))
    }

    fn project_back(&self, r: Rel, orig: &Scheme, now: &Scheme) -> Rel {
        if orig.len() == now.len() {
            r
        } else {
            Rel::Project(Box::new(r), orig.names().cloned().collect())
        }
    }

    fn set_op(&self, op: SetOp, a: &Expr, b: &Expr) -> Result<Ir> {
        let (ra, sa) = self.rel(a)?;
        let (rb, sb) = self.rel(b)?;
        let (rb, sb) = match (&rb, sa.len(), sb.len()) {
            (Rel::FromScalar(s, _), 1, 1) if op != SetOp::Times && op != SetOp::Join => {
                let n = sa.attrs[0].name.clone();
                let scheme = Scheme::new(vec![Attr::new(n.clone(), sb.attrs[0].ty.clone())])?;
                (Rel::FromScalar(s.clone(), n), scheme)
            }
            _ => (rb, sb),
        };
        let scheme = match op {
            SetOp::Union | SetOp::Minus | SetOp::Intersect => {
                if !sa.compatible(&sb) {
                    return Err(Error::SchemeMismatch(format!("{} of {sa} and {sb}", op.keyword())));
                }
                sa.without_keys()
            }
            SetOp::Times => {
                let mut attrs = sa.attrs.clone();
                attrs.extend(sb.attrs.iter().cloned());
                Scheme::new(attrs)?
            }
            SetOp::Join => {
                let mut attrs = sa.attrs.clone();
                for at in &sb.attrs {
                    match sa.attr(&at.name) {
                        Some(x) if !same_domain(&x.ty, &at.ty) => {
                            return Err(Error::SchemeMismatch(format!("join on {} of {} and {}", at.name, x.ty, at.ty)))
                        }
                        Some(_) => {}
                        None => attrs.push(at.clone()),
                    }
                }
                Scheme::new(attrs)?
            }
        };
        Ok(Ir::R(Rel::SetOp(op, Box::new(ra), Box::new(rb)), scheme))
    }

    fn sets(&self, sets: &[(lang::Path, Expr)], sch: &Scheme) -> Result<Vec<(AttrName, Row)>> {
        let mut out = Vec::new();
        for (p, e) in sets {
            let n = attr_of(p);
            let target = sch.attr(&n).ok_or_else(|| Error::UnknownAttribute(n.to_string()))?.ty.clone();
            let row = self.row(e, sch)?;
            let t = row.ty();
            let null = matches!(row, Row::Lit(Value::Undefined, _)) || matches!(&row, Row::Outer(s) if s.is_null());
            if !(null || same_domain(&target, &t) || (target == ScalarType::Float && t == ScalarType::Integer)) {
                return Err(type_err(format!("cannot assign {t} to {n}:{target}")));
            }
            out.push((n, retype_null_row(row, &target)));
        }
        Ok(out)
    }

    fn expand(&self, rel: Rel, sch: &Scheme, attr: &AttrName) -> Result<(Rel, Scheme)> {
        let a = sch.attr(attr).ok_or_else(|| Error::UnknownAttribute(attr.to_string()))?;
        let ScalarType::Ref(t) = &a.ty else {
            return Err(Error::NotARefAttribute(attr.to_string()));
        };
        let target = rvars::type_scheme(self.state, t)?;
        let mut attrs = sch.attrs.clone();
        attrs.extend(target.attrs.iter().filter(|x| !x.name.is_oid()).map(|x| Attr::new(x.name.refined(attr), x.ty.clone())));
        Ok((Rel::Expand(Box::new(rel), attr.clone(), t.clone()), Scheme::new(attrs)?))
    }

    /// Implicit reference expansion: every path mentioned in `exprs` that is
    /// not an attribute but extends a reference attribute triggers one
    /// expansion along the longest such prefix.
    fn expand_for(&self, mut rel: Rel, mut sch: Scheme, exprs: &[&Expr]) -> Result<(Rel, Scheme)> {
        let mut paths = Vec::new();
        for e in exprs {
            collect_paths(e, &mut paths);
        }
        for _ in 0..EXPANSION_LIMIT {
            let mut changed = false;
            for p in &paths {
                if sch.index_of(&attr_of(p)).is_some() {
                    continue;
                }
                let prefix = (1..p.len()).rev().map(|k| attr_of(&p[..k])).find(|q| {
                    sch.attr(q).is_some_and(|a| a.ty.is_ref() && !a.name.is_oid())
                });
                if let Some(q) = prefix {
                    let (r, s) = self.expand(rel, &sch, &q)?;
                    rel = r;
                    sch = s;
                    changed = true;
                    break;
                }
            }
            if !changed {
                break;
            }
        }
        Ok((rel, sch))
    }

    /// Analyzes an expression evaluated against the rows of `sch`.
    pub fn row(&self, e: &Expr, sch: &Scheme) -> Result<Row> {
        if let Some(p) = e.as_path() {
            let n = attr_of(&p);
            if let Some(a) = sch.attr(&n) {
                return Ok(Row::Attr(n, a.ty.clone()));
            }
        }
        Ok(match e {
            Expr::Lit(l) => {
                let (v, t) = literal(l);
                Row::Lit(v, t)
            }
            Expr::Ov(base, conds) if base.as_path().is_some_and(|p| sch.index_of(&attr_of(&p)).is_some()) => {
                let n = attr_of(&base.as_path().expect("checked"));
                let ScalarType::Ref(t) = sch.attr(&n).expect("checked").ty.clone() else {
                    return Err(Error::NotARefAttribute(n.to_string()));
                };
                let tsch = rvars::type_scheme(self.state, &t)?;
                let Ir::R(ov, _) = self.ov(Rel::TypeVar(t.clone()), tsch.clone(), conds)? else {
                    unreachable!("ov yields a relation")
                };
                let attr_ty = ScalarType::Ref(t);
                Row::InGroup(Box::new(Row::Attr(n, attr_ty)), Box::new(Rel::ObjectOf(Box::new(ov))))
            }
            Expr::Binary(op, a, b) => {
                let x = self.row(a, sch)?;
                let y = self.row(b, sch)?;
                row_binary(*op, x, y)?
            }
            Expr::Not(a) => {
                let x = self.row(a, sch)?;
                expect_bool(&x.ty())?;
                Row::Not(Box::new(x))
            }
            Expr::Neg(a) => {
                let x = self.row(a, sch)?;
                if !x.ty().is_numeric() {
                    return Err(type_err(format!("cannot negate {}", x.ty())));
                }
                Row::Neg(Box::new(x))
            }
            Expr::IsNull(a) => Row::IsNull(Box::new(self.row(a, sch)?)),
            Expr::IsType { expr, ty, exact } => {
                self.state.types.class(ty)?;
                let x = self.row(expr, sch)?;
                if !x.ty().is_ref() {
                    return Err(type_err(format!("{} is not a reference", x.ty())));
                }
                Row::IsType(Box::new(x), ty.clone(), *exact)
            }
            other => Row::Outer(Box::new(self.scalar(other)?)),
        })
    }

    /// Typing of a value written to a slot of type `vt` and row scheme
    /// `scheme`; with `allow_oid` a relation carrying OID is kept as is.
    pub fn coerce(&self, ir: Ir, vt: &ValueType, scheme: &Scheme, allow_oid: bool) -> Result<Ir> {
        if let ValueType::Scalar(t) = vt {
            let s = self.to_scalar(ir)?;
            if !assignable(t, &s) {
                return Err(type_err(format!("cannot assign {} to {t}", s.ty())));
            }
            return Ok(Ir::S(retype_null(s, t), t.clone()));
        }
        match ir {
            Ir::S(s, st) => {
                if scheme.len() == 1 && assignable(&scheme.attrs[0].ty, &s) {
                    let n = scheme.attrs[0].name.clone();
                    let _ = st;
                    let s = retype_null(s, &scheme.attrs[0].ty);
                    Ok(Ir::R(Rel::FromScalar(Box::new(s), n), scheme.clone()))
                } else {
                    Err(type_err(format!("cannot assign a {} value to {scheme}", s.ty())))
                }
            }
            Ir::R(rel, sch) => {
                if sch.compatible(scheme) {
                    return Ok(Ir::R(rel, sch));
                }
                let bare = without_oid(&sch);
                if sch.has_oid() && bare.compatible(scheme) {
                    if allow_oid {
                        return Ok(Ir::R(rel, sch));
                    }
                    let keep: Vec<AttrName> = bare.names().cloned().collect();
                    return Ok(Ir::R(Rel::Project(Box::new(rel), keep), bare));
                }
                if bare.len() == 1 && scheme.len() == 1 && same_domain(&bare.attrs[0].ty, &scheme.attrs[0].ty) {
                    let from = bare.attrs[0].name.clone();
                    let to = scheme.attrs[0].name.clone();
                    let mut keep = Vec::new();
                    if allow_oid && sch.has_oid() {
                        keep.push(AttrName::oid());
                    }
                    keep.push(from.clone());
                    let projected = project_scheme(&sch, &keep)?;
                    let out = rename_scheme(&projected, &[(from.clone(), to.clone())])?;
                    let r = Rel::Rename(Box::new(Rel::Project(Box::new(rel), keep)), vec![(from, to)]);
                    return Ok(Ir::R(r, out));
                }
                if bare.is_empty() && sch.len() == 1 && scheme.len() == 1 && same_domain(&sch.attrs[0].ty, &scheme.attrs[0].ty) {
                    let to = scheme.attrs[0].name.clone();
                    let out = rename_scheme(&sch, &[(AttrName::oid(), to.clone())])?;
                    return Ok(Ir::R(Rel::Rename(Box::new(rel), vec![(AttrName::oid(), to)]), out));
                }
                Err(type_err(format!("cannot assign {sch} to {scheme}")))
            }
        }
    }
}

fn collect_paths(e: &Expr, out: &mut Vec<Vec<String>>) {
    if let Some(p) = e.as_path() {
        if p.len() > 1 {
            out.push(p);
        }
        return;
    }
    match e {
        Expr::Binary(_, a, b) => {
            collect_paths(a, out);
            collect_paths(b, out);
        }
        Expr::Not(a) | Expr::Neg(a) | Expr::IsNull(a) => collect_paths(a, out),
        Expr::IsType { expr, .. } => collect_paths(expr, out),
        Expr::Ov(base, _) => collect_paths(base, out),
        _ => {}
    }
}

pub fn literal(l: &Literal) -> (Value, ScalarType) {
    match l {
        Literal::Int(i) => (Value::Int(*i), ScalarType::Integer),
        Literal::Float(x) => (Value::Float(*x), ScalarType::Float),
        Literal::Str(s) => (Value::Str(s.clone()), ScalarType::String),
        Literal::Bool(b) => (Value::Bool(*b), ScalarType::Boolean),
        Literal::Date(d) => (Value::Date(*d), ScalarType::Date),
        Literal::Null => (Value::Undefined, ScalarType::doid()),
    }
}

fn expect_bool(t: &ScalarType) -> Result<()> {
    if *t == ScalarType::Boolean {
        Ok(())
    } else {
        Err(type_err(format!("expected BOOLEAN, found {t}")))
    }
}

fn expect_bool_row(r: &Row) -> Result<()> {
    let t = r.ty();
    if t == ScalarType::Boolean {
        Ok(())
    } else {
        Err(Error::NonBooleanCondition(format!("condition of type {t}")))
    }
}

fn comparable(a: &ScalarType, b: &ScalarType, null: bool) -> bool {
    null || a.comparable(b)
}

fn scalar_binary(op: BinOp, x: Scalar, y: Scalar) -> Result<Scalar> {
    let (x, y) = match (x.is_null(), y.is_null()) {
        (true, false) => (retype_null(x, &y.ty()), y),
        (false, true) => {
            let t = x.ty();
            (x, retype_null(y, &t))
        }
        _ => (x, y),
    };
    let (tx, ty) = (x.ty(), y.ty());
    let null = x.is_null() || y.is_null();
    Ok(match op {
        BinOp::Arith(a) => {
            if arith_type(a, &tx, &ty).is_none() && !null {
                return Err(type_err(format!("cannot apply {} to {tx} and {ty}", a.symbol())));
            }
            Scalar::Arith(a, Box::new(x), Box::new(y))
        }
        BinOp::Cmp(c) => {
            if !comparable(&tx, &ty, null) {
                return Err(type_err(format!("cannot compare {tx} {} {ty}", c.symbol())));
            }
            Scalar::Cmp(c, Box::new(x), Box::new(y))
        }
        BinOp::And | BinOp::Or => {
            expect_bool(&tx)?;
            expect_bool(&ty)?;
            if op == BinOp::And {
                Scalar::And(Box::new(x), Box::new(y))
            } else {
                Scalar::Or(Box::new(x), Box::new(y))
            }
        }
    })
}

fn row_is_null(r: &Row) -> bool {
    matches!(r, Row::Lit(Value::Undefined, _)) || matches!(r, Row::Outer(s) if s.is_null())
}

fn row_binary(op: BinOp, x: Row, y: Row) -> Result<Row> {
    let (x, y) = match (row_is_null(&x), row_is_null(&y)) {
        (true, false) => (retype_null_row(x, &y.ty()), y),
        (false, true) => {
            let t = x.ty();
            (x, retype_null_row(y, &t))
        }
        _ => (x, y),
    };
    let (tx, ty) = (x.ty(), y.ty());
    let null = row_is_null(&x) || row_is_null(&y);
    Ok(match op {
        BinOp::Arith(a) => {
            if arith_type(a, &tx, &ty).is_none() && !null {
                return Err(type_err(format!("cannot apply {} to {tx} and {ty}", a.symbol())));
            }
            Row::Arith(a, Box::new(x), Box::new(y))
        }
        BinOp::Cmp(c) => {
            if !comparable(&tx, &ty, null) {
                return Err(type_err(format!("cannot compare {tx} {} {ty}", c.symbol())));
            }
            Row::Cmp(c, Box::new(x), Box::new(y))
        }
        BinOp::And | BinOp::Or => {
            expect_bool(&tx)?;
            expect_bool(&ty)?;
            if op == BinOp::And {
                Row::And(Box::new(x), Box::new(y))
            } else {
                Row::Or(Box::new(x), Box::new(y))
            }
        }
    })
}

pub fn project_scheme(sch: &Scheme, keep: &[AttrName]) -> Result<Scheme> {
    let mut attrs = Vec::new();
    for n in keep {
        attrs.push(sch.attr(n).cloned().ok_or_else(|| Error::UnknownAttribute(n.to_string()))?);
    }
    Scheme::new(attrs)
}

pub fn rename_scheme(sch: &Scheme, pairs: &[(AttrName, AttrName)]) -> Result<Scheme> {
    for (from, _) in pairs {
        sch.require(from)?;
    }
    let attrs = sch
        .attrs
        .iter()
        .map(|a| match pairs.iter().find(|(f, _)| *f == a.name) {
            Some((_, to)) => Attr::new(to.clone(), a.ty.clone()),
            None => a.clone(),
        })
        .collect();
    Scheme::new(attrs)
}

// ---- statements ----

struct BodyCx<'a, 'b> {
    env: &'b mut Env<'a>,
    result: Option<(ValueType, Scheme)>,
    has_result: bool,
}

fn target_slot(env: &Env, t: &Expr) -> Result<(Target, ValueType, Scheme, bool)> {
    let not_writable = || Error::NotWritable(lang::pretty::expr(t));
    if let Expr::Name(n) = t {
        if let Some((vt, s)) = env.locals.get(n) {
            return Ok((Target::Local(n.clone()), vt.clone(), s.clone(), false));
        }
        if env.params.iter().any(|(p, _)| p == n) {
            return Err(not_writable());
        }
        if let Some(vt) = env.ctx_attr(n) {
            let s = value_scheme(env.state, n, &vt)?;
            return Ok((Target::ThisComp(n.clone()), vt, s, false));
        }
        if let Some(r) = env.global_scheme(n) {
            let (vt, s) = r?;
            if !matches!(env.state.globals[n].imp, GlobalImpl::Stored(_)) {
                return Err(not_writable());
            }
            return Ok((Target::Global(n.clone()), vt, s, false));
        }
    }
    if let Expr::Member(b, n) = t {
        if matches!(**b, Expr::This) {
            let vt = env.ctx_attr(n).ok_or_else(not_writable)?;
            let s = value_scheme(env.state, n, &vt)?;
            return Ok((Target::ThisComp(n.clone()), vt, s, false));
        }
    }
    let (group, ty, comp) = match env.expr(t)? {
        Ir::R(Rel::CompVar(ty, comp), _) => (None, ty, comp),
        Ir::R(Rel::Deref { group, ty, comp }, _) => (Some(*group), ty, comp),
        Ir::S(Scalar::Single(r, _, _), _) => match *r {
            Rel::CompVar(ty, comp) => (None, ty, comp),
            Rel::Deref { group, ty, comp } => (Some(*group), ty, comp),
            _ => return Err(not_writable()),
        },
        _ => return Err(not_writable()),
    };
    let vt = env.state.types.component(&ty, &comp)?.spec.value_type()?.clone();
    let s = value_scheme(env.state, &comp, &vt)?;
    Ok((Target::GroupComp { group, ty, comp }, vt, s, true))
}

/// Scheme against which DELETE and UPDATE conditions of a target are analyzed.
fn dml_scheme(env: &Env, target: &Target, s: &Scheme) -> Result<Scheme> {
    Ok(match target {
        Target::GroupComp { ty, comp, .. } => rvars::component_scheme(env.state, ty, comp)?,
        _ => s.clone(),
    })
}

/// Analyzes a write statement against `env`.
pub fn write(env: &Env, stmt: &lang::Stmt) -> Result<Stmt> {
    use lang::Stmt as S;
    Ok(match stmt {
        S::Assign { target, value } => {
            let (t, vt, s, group) = target_slot(env, target)?;
            let v = env.coerce(env.expr(value)?, &vt, &s, group)?;
            Stmt::Write { target: t, op: WriteOp::Assign(v) }
        }
        S::Insert { target, value } => {
            let (t, vt, s, group) = target_slot(env, target)?;
            if vt.is_scalar() {
                return Err(type_err("INSERT into a single value"));
            }
            let v = env.coerce(env.expr(value)?, &vt, &s, group)?;
            Stmt::Write { target: t, op: WriteOp::Insert(v) }
        }
        S::Delete { target, cond } => {
            let (t, vt, s, _) = target_slot(env, target)?;
            if vt.is_scalar() {
                return Err(type_err("DELETE from a single value"));
            }
            let ds = dml_scheme(env, &t, &s)?;
            let c = cond.as_ref().map(|c| env.row(c, &ds)).transpose()?;
            if let Some(c) = &c {
                expect_bool_row(c)?;
            }
            Stmt::Write { target: t, op: WriteOp::Delete(c) }
        }
        S::Update { target, sets, cond } => {
            let (t, vt, s, _) = target_slot(env, target)?;
            if vt.is_scalar() {
                return Err(type_err("UPDATE of a single value"));
            }
            let ds = dml_scheme(env, &t, &s)?;
            let sets = env.sets(sets, &ds)?;
            if sets.iter().any(|(n, _)| n.is_oid()) {
                return Err(Error::NotWritable("OID".into()));
            }
            let c = cond.as_ref().map(|c| env.row(c, &ds)).transpose()?;
            if let Some(c) = &c {
                expect_bool_row(c)?;
            }
            Stmt::Write { target: t, op: WriteOp::Update(sets, c) }
        }
        other => return Err(Error::Unsupported(format!("{other:?} is not a write"))),
    })
}

impl BodyCx<'_, '_> {
    fn cond(&self, e: &Expr) -> Result<Scalar> {
        let s = self.env.scalar(e)?;
        if s.ty() != ScalarType::Boolean {
            return Err(Error::NonBooleanCondition(lang::pretty::expr(e)));
        }
        Ok(s)
    }

    fn block(&mut self, stmts: &[lang::Stmt]) -> Result<Vec<Stmt>> {
        let mut out = Vec::new();
        for s in stmts {
            if let Some(s) = self.stmt(s)? {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn stmt(&mut self, stmt: &lang::Stmt) -> Result<Option<Stmt>> {
        use lang::Stmt as S;
        Ok(Some(match stmt {
            S::Declare { name, ty } => {
                if self.env.locals.contains_key(name) || self.env.params.iter().any(|(p, _)| p == name) {
                    return Err(Error::DuplicateName(name.clone()));
                }
                let vt = self.env.state.types.value_type(ty)?;
                let s = value_scheme(self.env.state, name, &vt)?;
                self.env.locals.insert(name.clone(), (vt, s));
                return Ok(None);
            }
            S::If { cond, then, els } => {
                let c = self.cond(cond)?;
                Stmt::If { cond: c, then: self.block(then)?, els: self.block(els)? }
            }
            S::DoWhile { body, cond } => {
                let b = self.block(body)?;
                Stmt::DoWhile { body: b, cond: self.cond(cond)? }
            }
            S::Return(e) => match (e, &self.result) {
                (None, _) => Stmt::Return(None),
                (Some(_), None) if !self.has_result => return Err(type_err("RETURN with a value in a constructor")),
                (Some(e), Some((vt, s))) => {
                    let v = self.env.coerce(self.env.expr(e)?, vt, s, false)?;
                    Stmt::Return(Some(v))
                }
                (Some(_), None) => unreachable!("has_result implies a result type"),
            },
            S::Execute(e) => {
                let (r, _) = self.env.rel(e)?;
                Stmt::Exec(r)
            }
            other => write(self.env, other)?,
        }))
    }
}

/// Analyzes the realization source `src` of method `method` for type `ty`.
pub fn method(state: &State, ty: &str, method: &str, src: &str) -> Result<Program> {
    let spec = state.types.component(ty, method)?.spec;
    let params = spec.params.clone().ok_or_else(|| Error::ImplKindMismatch(format!("{ty}.{method}")))?;
    let body = lang::parse_body(src)?;
    let mut env = Env { state, ctx: Some(ty.to_string()), params: params.clone(), locals: BTreeMap::new() };
    let result = match &spec.ty {
        Some(vt) => Some((vt.clone(), value_scheme(state, method, vt)?)),
        None => None,
    };
    let has_result = result.is_some();
    let mut cx = BodyCx { env: &mut env, result: result.clone(), has_result };
    let body = cx.block(&body)?;
    Ok(Program {
        ty: ty.to_string(),
        method: method.to_string(),
        params,
        locals: env.locals,
        result: result.map(|(_, s)| s),
        body,
    })
}

/// Analyzes the defining expression `src` of computed component `comp` for type `ty`.
pub fn computed(state: &State, ty: &str, comp: &str, src: &str) -> Result<ComputedIr> {
    let spec = state.types.component(ty, comp)?.spec;
    let vt = spec.value_type()?.clone();
    let scheme = value_scheme(state, comp, &vt)?;
    let e = lang::parse_expr(src)?;
    let env = Env::in_type(state, ty);
    let expr = env.coerce(env.expr(&e)?, &vt, &scheme, false)?;
    Ok(ComputedIr { ty: ty.to_string(), comp: comp.to_string(), expr })
}

/// Analyzes the defining expression of a computed global variable.
pub fn global(state: &State, name: &str, vt: &ValueType, src: &str) -> Result<Ir> {
    let scheme = value_scheme(state, name, vt)?;
    let e = lang::parse_expr(src)?;
    let env = Env::top(state);
    env.coerce(env.expr(&e)?, vt, &scheme, false)
}

/// Realization text of `ty.comp` if it is computed.
pub fn computed_source(state: &State, ty: &str, comp: &str) -> Option<String> {
    match state.types.class(ty).ok()?.impls.get(comp)? {
        Impl::Computed(s) => Some(s.clone()),
        _ => None,
    }
}
