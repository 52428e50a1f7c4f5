//! Object-at-a-time interpretation: the reference semantics the compiled
//! programs are checked against.

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog;
use crate::error::{Error, Result};
use crate::lang::SetOp;
use crate::relalg::{Aggregate, Attr, AttrName, Oid, Relation, RowExpr, Scheme, Value};
use crate::rvars;
use crate::storage::{Database, GlobalImpl};

use super::ir::*;
use super::{eval_const, eval_global, invoke, scalar_node, too_many_rows, type_members, write_comp, LOOP_CAP};

/// Evaluation context for one object (or none, at top level).
#[derive(Debug, Clone, Default)]
pub struct Frame {
    pub ty: Option<String>,
    pub this: Option<Oid>,
    pub params: BTreeMap<String, Value>,
    /// Local variables, each a relation over its value scheme.
    pub locals: BTreeMap<String, Relation>,
    pub result: Option<Relation>,
    pub result_scheme: Option<Scheme>,
    pub returned: bool,
}

impl Frame {
    pub fn top() -> Self {
        Frame::default()
    }

    pub fn object(ty: &str, o: Oid) -> Self {
        Frame { ty: Some(ty.to_string()), this: Some(o), ..Frame::default() }
    }

    fn this(&self) -> Result<(String, Oid)> {
        match (&self.ty, self.this) {
            (Some(t), Some(o)) => Ok((t.clone(), o)),
            _ => Err(Error::UnknownName("this".into())),
        }
    }
}

/// Fresh local variable value: one undefined row for a scalar, empty otherwise.
pub(crate) fn initial_local(scheme: &Scheme, scalar: bool) -> Result<Relation> {
    let mut r = Relation::empty(scheme.clone());
    if scalar {
        r.insert(vec![Value::Undefined])?;
    }
    Ok(r)
}

/// Evaluates `ir` as a relation over `scheme`; a scalar becomes one row.
pub fn eval_into(db: &mut Database, f: &Frame, ir: &Ir, scheme: &Scheme) -> Result<Relation> {
    match ir {
        Ir::R(r, _) => rel(db, f, r)?.reorder_to(scheme),
        Ir::S(s, _) => {
            let v = scalar(db, f, s)?;
            Relation::from_tuples(scheme.clone(), vec![vec![v]])
        }
    }
}

fn oids_of(r: &Relation) -> Result<BTreeSet<Oid>> {
    rvars::oids_in(r, &AttrName::oid())
}

pub fn rel(db: &mut Database, f: &Frame, r: &Rel) -> Result<Relation> {
    Ok(match r {
        Rel::ThisComp(c) => {
            let (ty, o) = f.this()?;
            rvars::component_rows(db, &ty, c, &[o].into())?.project_drop(&[AttrName::oid()])?
        }
        Rel::TypeVar(t) => rvars::type_rvar(db, t)?,
        Rel::CompVar(t, c) => rvars::component_rvar(db, t, c)?,
        Rel::Global(n) => eval_global(db, n)?,
        Rel::Catalog(n) => {
            catalog::table(&db.state.types, &db.state.oids, n).ok_or_else(|| Error::UnknownName(n.clone()))?
        }
        Rel::Local(n) => f.locals.get(n).cloned().ok_or_else(|| Error::UnknownName(n.clone()))?,
        Rel::Members(t) => rvars::group(t, db.state.oids.members(&db.state.types, t)),
        Rel::FromScalar(s, n) => {
            let v = scalar(db, f, s)?;
            let mut r = Relation::empty(Scheme::new(vec![Attr::new(n.clone(), s.ty())])?);
            if !v.is_undefined() {
                r.insert(vec![v])?;
            }
            r
        }
        Rel::Tuple(fields) => {
            let mut attrs = Vec::new();
            let mut row = Vec::new();
            for (n, s) in fields {
                attrs.push(Attr::new(n.clone(), s.ty()));
                row.push(scalar(db, f, s)?);
            }
            Relation::from_tuples(Scheme::new(attrs)?, vec![row])?
        }
        Rel::Group(s, t) => {
            let v = scalar(db, f, s)?;
            rvars::group(t, v.as_oid())
        }
        Rel::AttrGroup(b, a, t) => {
            let base = rel(db, f, b)?;
            rvars::group(t, rvars::oids_in(&base, a)?)
        }
        Rel::Deref { group, ty, comp } => {
            let g = rel(db, f, group)?;
            rvars::component_rows(db, ty, comp, &oids_of(&g)?)?
        }
        Rel::DerefType { group, ty } => {
            let g = rel(db, f, group)?;
            rvars::type_rows(db, ty, &oids_of(&g)?)?
        }
        Rel::SetOp(op, a, b) => {
            let x = rel(db, f, a)?;
            let y = rel(db, f, b)?;
            match op {
                SetOp::Union => x.union(&y)?,
                SetOp::Minus => x.minus(&y)?,
                SetOp::Intersect => x.intersect(&y)?,
                SetOp::Times => x.product(&y)?,
                SetOp::Join => x.natural_join(&y)?,
            }
        }
        Rel::Where(b, c) => {
            let base = rel(db, f, b)?;
            base.select_where(&row(db, f, c)?)?
        }
        Rel::Project(b, keep) => rel(db, f, b)?.project(keep)?,
        Rel::Rename(b, pairs) => rel(db, f, b)?.rename(pairs)?,
        Rel::Replace(b, sets) => {
            let base = rel(db, f, b)?;
            let mut lowered = Vec::new();
            for (n, e) in sets {
                lowered.push((n.clone(), row(db, f, e)?));
            }
            base.replace(&lowered)?
        }
        Rel::Expand(b, a, _) => {
            let base = rel(db, f, b)?;
            rvars::expand_ref(db, &base, a)?
        }
        Rel::Summarize(b, by, adds) => {
            let base = rel(db, f, b)?;
            let mut aggs = Vec::new();
            for (func, e, n) in adds {
                aggs.push(Aggregate::new(*func, row(db, f, e)?, n.clone()));
            }
            base.summarize(by, &aggs)?
        }
        Rel::Ov(b, conds) => {
            let base = rel(db, f, b)?;
            let mut lowered = Vec::new();
            for c in conds {
                lowered.push(row(db, f, c)?);
            }
            rvars::ov_retrieval(&base, &lowered)?
        }
        Rel::ObjectOf(b) => rvars::object_of(&rel(db, f, b)?)?,
        Rel::Call { group, ty, method, args } => {
            let g = rel(db, f, group)?;
            let targets = oids_of(&g)?;
            let mut vals = Vec::new();
            for a in args {
                vals.push(scalar(db, f, a)?);
            }
            let per: BTreeMap<Oid, Vec<Value>> = targets.iter().map(|o| (*o, vals.clone())).collect();
            invoke(db, ty, method, &targets, &per)?
        }
    })
}

/// The value of `attr` in the only row of `r`; undefined when `r` is empty.
pub(crate) fn single(r: &Relation, attr: &AttrName) -> Result<Value> {
    let i = r.scheme().require(attr)?;
    let mut it = r.iter();
    match (it.next(), it.next()) {
        (None, _) => Ok(Value::Undefined),
        (Some(t), None) => Ok(t[i].clone()),
        _ => Err(too_many_rows(attr)),
    }
}

pub fn scalar(db: &mut Database, f: &Frame, s: &Scalar) -> Result<Value> {
    Ok(match s {
        Scalar::Lit(v, _) => v.clone(),
        Scalar::This(_) => Value::Oid(f.this()?.1),
        Scalar::Param(n, _) => f.params.get(n).cloned().ok_or_else(|| Error::UnknownName(n.clone()))?,
        Scalar::Local(n, _) => {
            let r = f.locals.get(n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            single(r, &AttrName::new(n.as_str()))?
        }
        Scalar::Arith(_, a, b) | Scalar::Cmp(_, a, b) | Scalar::And(a, b) | Scalar::Or(a, b) => {
            let x = RowExpr::typed_lit(scalar(db, f, a)?, &a.ty());
            let y = RowExpr::typed_lit(scalar(db, f, b)?, &b.ty());
            eval_const(&scalar_node(s, vec![x, y]))?
        }
        Scalar::Neg(a) | Scalar::Not(a) | Scalar::IsNull(a) => {
            let x = RowExpr::typed_lit(scalar(db, f, a)?, &a.ty());
            eval_const(&scalar_node(s, vec![x]))?
        }
        Scalar::Exist(r) => Value::Bool(!rel(db, f, r)?.is_empty()),
        Scalar::Single(r, attr, _) => single(&rel(db, f, r)?, attr)?,
        Scalar::IsType(a, t, exact) => {
            let v = scalar(db, f, a)?;
            Value::Bool(!v.is_undefined() && type_members(&db.state, t, *exact).contains(&v))
        }
        Scalar::Today => super::today(),
    })
}

pub fn row(db: &mut Database, f: &Frame, r: &Row) -> Result<RowExpr> {
    let bx = Box::new;
    Ok(match r {
        Row::Attr(n, _) => RowExpr::Attr(n.clone()),
        Row::Lit(v, t) => RowExpr::typed_lit(v.clone(), t),
        Row::Outer(s) => RowExpr::typed_lit(scalar(db, f, s)?, &s.ty()),
        Row::Arith(op, a, b) => RowExpr::Arith(*op, bx(row(db, f, a)?), bx(row(db, f, b)?)),
        Row::Neg(a) => RowExpr::Neg(bx(row(db, f, a)?)),
        Row::Cmp(op, a, b) => RowExpr::Cmp(*op, bx(row(db, f, a)?), bx(row(db, f, b)?)),
        Row::And(a, b) => RowExpr::And(bx(row(db, f, a)?), bx(row(db, f, b)?)),
        Row::Or(a, b) => RowExpr::Or(bx(row(db, f, a)?), bx(row(db, f, b)?)),
        Row::Not(a) => RowExpr::Not(bx(row(db, f, a)?)),
        Row::IsNull(a) => RowExpr::IsNull(bx(row(db, f, a)?)),
        Row::InGroup(a, g) => {
            let x = row(db, f, a)?;
            let members = rel(db, f, g)?.column(&AttrName::oid())?;
            RowExpr::In(bx(x), std::sync::Arc::new(members))
        }
        Row::IsType(a, t, exact) => RowExpr::In(bx(row(db, f, a)?), type_members(&db.state, t, *exact)),
    })
}

/// Current value of a write target, and its slot description for the write.
fn current(db: &mut Database, f: &Frame, t: &Target) -> Result<(Relation, Option<(String, String, BTreeSet<Oid>)>)> {
    Ok(match t {
        Target::Local(n) => (f.locals.get(n).cloned().ok_or_else(|| Error::UnknownName(n.clone()))?, None),
        Target::Global(n) => (eval_global(db, n)?, None),
        Target::ThisComp(c) => {
            let (ty, o) = f.this()?;
            let oids: BTreeSet<Oid> = [o].into();
            let cur = rvars::component_rows(db, &ty, c, &oids)?;
            (cur, Some((ty, c.clone(), oids)))
        }
        Target::GroupComp { group, ty, comp } => {
            let oids: BTreeSet<Oid> = match group {
                Some(g) => oids_of(&rel(db, f, g)?)?,
                None => db.state.oids.members(&db.state.types, ty).into_iter().collect(),
            };
            let cur = rvars::component_rows(db, ty, comp, &oids)?;
            (cur, Some((ty.clone(), comp.clone(), oids)))
        }
    })
}

/// Rows written to a component: a value carrying OID is taken as is, any
/// other value is given to every object of the group.
fn per_object(value: Relation, ty: &str, oids: &BTreeSet<Oid>) -> Result<Relation> {
    if value.scheme().has_oid() {
        Ok(value)
    } else {
        rvars::group(ty, oids.iter().copied()).product(&value)
    }
}

pub fn write(db: &mut Database, f: &mut Frame, target: &Target, op: &WriteOp) -> Result<()> {
    let (cur, slot) = current(db, f, target)?;
    let scheme = cur.scheme().clone();
    let value = |db: &mut Database, f: &Frame, ir: &Ir| -> Result<Relation> {
        let v = match ir {
            Ir::S(s, t) => {
                let v = scalar(db, f, s)?;
                let name = scheme.attrs.last().map(|a| a.name.clone()).unwrap_or_else(|| AttrName::new("value"));
                Relation::singleton(name, t.clone(), v)?
            }
            Ir::R(r, _) => rel(db, f, r)?,
        };
        match &slot {
            Some((ty, _, oids)) => per_object(v, ty, oids)?.reorder_to(&scheme),
            None => v.reorder_to(&scheme),
        }
    };
    let new = match op {
        WriteOp::Assign(ir) => value(db, f, ir)?,
        WriteOp::Insert(ir) => cur.union(&value(db, f, ir)?)?,
        WriteOp::Delete(c) => match c {
            None => Relation::empty(scheme.clone()),
            Some(c) => cur.select_where(&RowExpr::not(row(db, f, c)?))?,
        },
        WriteOp::Update(sets, c) => {
            let mut lowered = Vec::new();
            for (n, e) in sets {
                lowered.push((n.clone(), row(db, f, e)?));
            }
            match c {
                None => cur.replace(&lowered)?,
                Some(c) => {
                    let c = row(db, f, c)?;
                    cur.select_where(&RowExpr::not(c.clone()))?.union(&cur.select_where(&c)?.replace(&lowered)?)?
                }
            }
        }
    };
    match (target, slot) {
        (_, Some((ty, comp, oids))) => write_comp(db, &ty, &comp, &oids, &new),
        (Target::Local(n), None) => {
            f.locals.insert(n.clone(), new);
            Ok(())
        }
        (Target::Global(n), None) => {
            let g = db.state.globals.get_mut(n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            let scalar = g.ty.is_scalar();
            match &mut g.imp {
                GlobalImpl::Stored(r) => {
                    let keys = r.scheme().keys.clone();
                    if scalar && new.len() > 1 {
                        return Err(Error::KeyViolation(format!("{n} has more than one value")));
                    }
                    *r = new.with_scheme_keys(keys)?;
                    Ok(())
                }
                GlobalImpl::Computed(_) => Err(Error::NotWritable(n.clone())),
            }
        }
        _ => unreachable!("component targets carry a slot"),
    }
}

pub fn exec_block(db: &mut Database, f: &mut Frame, body: &[Stmt]) -> Result<()> {
    for s in body {
        if f.returned {
            break;
        }
        exec(db, f, s)?;
    }
    Ok(())
}

pub fn exec(db: &mut Database, f: &mut Frame, s: &Stmt) -> Result<()> {
    match s {
        Stmt::Write { target, op } => write(db, f, target, op),
        Stmt::If { cond, then, els } => {
            if scalar(db, f, cond)?.as_bool() == Some(true) {
                exec_block(db, f, then)
            } else {
                exec_block(db, f, els)
            }
        }
        Stmt::DoWhile { body, cond } => {
            let mut n = 0;
            loop {
                exec_block(db, f, body)?;
                n += 1;
                if f.returned || scalar(db, f, cond)?.as_bool() != Some(true) {
                    return Ok(());
                }
                if n >= LOOP_CAP {
                    return Err(Error::LoopLimitExceeded(LOOP_CAP));
                }
            }
        }
        Stmt::Return(v) => {
            if let Some(v) = v {
                let scheme = f.result_scheme.clone().ok_or_else(|| Error::eval("RETURN with a value outside a method"))?;
                f.result = Some(eval_into(db, f, v, &scheme)?);
            }
            f.returned = true;
            Ok(())
        }
        Stmt::Exec(r) => rel(db, f, r).map(|_| ()),
    }
}

/// Runs a method body for one object; the value fields of the result, if any.
pub fn run_program(db: &mut Database, p: &Program, o: Oid, args: &[Value]) -> Result<Option<Relation>> {
    let mut f = Frame::object(&p.ty, o);
    f.result_scheme = p.result.clone();
    for ((n, _), v) in p.params.iter().zip(args) {
        f.params.insert(n.clone(), v.clone());
    }
    for (n, (vt, s)) in &p.locals {
        f.locals.insert(n.clone(), initial_local(s, vt.is_scalar())?);
    }
    exec_block(db, &mut f, &p.body)?;
    Ok(match (&p.result, f.result) {
        (Some(s), Some(r)) => Some(r.reorder_to(s)?),
        (Some(s), None) => Some(Relation::empty(s.clone())),
        (None, _) => None,
    })
}

