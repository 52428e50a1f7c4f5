//! Set-at-a-time execution. Every per-object value is threaded through a
//! `#this` column, so one relational evaluation covers a whole group.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use crate::catalog;
use crate::error::{Error, Result};
use crate::lang::SetOp;
use crate::relalg::{Aggregate, Attr, AttrName, Oid, Relation, RowExpr, ScalarType, Scheme, Value};
use crate::rvars;
use crate::storage::Database;

use super::interp::{self, Frame};
use super::ir::*;
use super::{call_scheme, eval_global, invoke, scalar_node, too_many_rows, type_members, write_comp, LOOP_CAP};

const V: &str = "#v";

fn this() -> AttrName {
    AttrName::this()
}

fn v() -> AttrName {
    AttrName::new(V)
}

fn on_this() -> [(AttrName, AttrName); 1] {
    [(this(), this())]
}

fn with_this(ty: &str, s: &Scheme) -> Result<Scheme> {
    let mut attrs = vec![Attr::new(this(), ScalarType::Ref(ty.to_string()))];
    attrs.extend(s.attrs.iter().cloned());
    Scheme::new(attrs)
}

fn names_with_this(keep: &[AttrName]) -> Vec<AttrName> {
    let mut out = vec![this()];
    out.extend(keep.iter().cloned());
    out
}

fn rows_of(r: &Relation, o: Oid) -> Result<Relation> {
    r.select_where(&RowExpr::eq(RowExpr::attr(this()), RowExpr::lit(Value::Oid(o))))?.project_drop(&[this()])
}

fn oids(r: &Relation, col: &AttrName) -> Result<BTreeSet<Oid>> {
    rvars::oids_in(r, col)
}

/// Execution state of one compiled program over a group.
struct CFrame {
    ty: String,
    active: BTreeSet<Oid>,
    params: BTreeMap<String, Relation>,
    locals: BTreeMap<String, Relation>,
    result: Relation,
    result_scheme: Option<Scheme>,
    done: BTreeSet<Oid>,
    fresh: Cell<usize>,
}

impl CFrame {
    fn new(ty: &str, active: BTreeSet<Oid>) -> Result<Self> {
        Ok(CFrame {
            ty: ty.to_string(),
            active,
            params: BTreeMap::new(),
            locals: BTreeMap::new(),
            result: Relation::empty(with_this(ty, &Scheme::default())?),
            result_scheme: None,
            done: BTreeSet::new(),
            fresh: Cell::new(0),
        })
    }

    /// The active group as a `(#this)` relation.
    fn group(&self) -> Result<Relation> {
        rvars::group(&self.ty, self.active.iter().copied()).rename(&[(AttrName::oid(), this())])
    }

    fn fresh(&self, prefix: &str) -> AttrName {
        let n = self.fresh.get();
        self.fresh.set(n + 1);
        AttrName::new(format!("#{prefix}{n}"))
    }

    /// The same value for every active object.
    fn constant(&self, r: &Relation) -> Result<Relation> {
        self.group()?.product(r)
    }

    /// The per-object view of this frame for `o`.
    fn object_frame(&self, o: Oid) -> Result<Frame> {
        let mut f = Frame::object(&self.ty, o);
        for (n, r) in &self.params {
            let one = rows_of(r, o)?;
            f.params.insert(n.clone(), interp::single(&one, &v())?);
        }
        for (n, r) in &self.locals {
            f.locals.insert(n.clone(), rows_of(r, o)?);
        }
        Ok(f)
    }
}

/// Per-object scalar as `(#this, #v)`, one row per active object.
fn scalar(db: &mut Database, f: &CFrame, s: &Scalar) -> Result<Relation> {
    Ok(match s {
        Scalar::Lit(val, t) => f.constant(&Relation::singleton(V, t.clone(), val.clone())?)?,
        Scalar::Today => f.constant(&Relation::singleton(V, ScalarType::Date, super::today())?)?,
        Scalar::This(_) => f.group()?.extend(V, &RowExpr::attr(this()))?,
        Scalar::Param(n, _) => {
            let p = f.params.get(n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            p.semijoin(&f.group()?, &on_this())?
        }
        Scalar::Local(n, _) => {
            let l = f.locals.get(n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            l.semijoin(&f.group()?, &on_this())?.rename(&[(AttrName::new(n.as_str()), v())])?
        }
        Scalar::Arith(_, a, b) | Scalar::Cmp(_, a, b) | Scalar::And(a, b) | Scalar::Or(a, b) => {
            let (na, nb) = (AttrName::new("#a"), AttrName::new("#b"));
            let x = scalar(db, f, a)?.rename(&[(v(), na.clone())])?;
            let y = scalar(db, f, b)?.rename(&[(v(), nb.clone())])?;
            let node = scalar_node(s, vec![RowExpr::Attr(na), RowExpr::Attr(nb)]);
            x.join_on(&y, &on_this())?.extend(V, &node)?.project(&[this(), v()])?
        }
        Scalar::Neg(a) | Scalar::Not(a) | Scalar::IsNull(a) => {
            let na = AttrName::new("#a");
            let x = scalar(db, f, a)?.rename(&[(v(), na.clone())])?;
            x.extend(V, &scalar_node(s, vec![RowExpr::Attr(na)]))?.project(&[this(), v()])?
        }
        Scalar::Exist(r) => {
            let rr = rel(db, f, r)?;
            let g = f.group()?;
            let yes = g.semijoin(&rr, &on_this())?.extend(V, &RowExpr::lit(true))?;
            let no = g.antijoin(&rr, &on_this())?.extend(V, &RowExpr::lit(false))?;
            yes.union(&no)?
        }
        Scalar::Single(r, attr, t) => {
            let rr = rel(db, f, r)?;
            let mut seen = BTreeSet::new();
            for row in rr.iter() {
                if !seen.insert(row[0].clone()) {
                    return Err(too_many_rows(attr));
                }
            }
            let vals = rr.project(&[this(), attr.clone()])?.rename(&[(attr.clone(), v())])?;
            let missing = f.group()?.antijoin(&rr, &on_this())?.extend(V, &RowExpr::Null(t.clone()))?;
            vals.union(&missing)?
        }
        Scalar::IsType(a, t, exact) => {
            let w = AttrName::new("#w");
            let x = scalar(db, f, a)?;
            let e = RowExpr::In(Box::new(RowExpr::Attr(v())), type_members(&db.state, t, *exact));
            x.extend(w.clone(), &e)?.project(&[this(), w.clone()])?.rename(&[(w, v())])?
        }
    })
}

/// Per-object relation: the object's rows, each tagged with `#this`.
fn rel(db: &mut Database, f: &CFrame, r: &Rel) -> Result<Relation> {
    Ok(match r {
        Rel::ThisComp(c) => {
            rvars::component_rows(db, &f.ty, c, &f.active)?.rename(&[(AttrName::oid(), this())])?
        }
        Rel::TypeVar(t) => f.constant(&rvars::type_rvar(db, t)?)?,
        Rel::CompVar(t, c) => f.constant(&rvars::component_rvar(db, t, c)?)?,
        Rel::Global(n) => f.constant(&eval_global(db, n)?)?,
        Rel::Catalog(n) => {
            let t = catalog::table(&db.state.types, &db.state.oids, n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            f.constant(&t)?
        }
        Rel::Members(t) => f.constant(&rvars::group(t, db.state.oids.members(&db.state.types, t)))?,
        Rel::Local(n) => {
            let l = f.locals.get(n).ok_or_else(|| Error::UnknownName(n.clone()))?;
            l.semijoin(&f.group()?, &on_this())?
        }
        Rel::FromScalar(s, n) => scalar(db, f, s)?
            .select_where(&RowExpr::not(RowExpr::IsNull(Box::new(RowExpr::Attr(v())))))?
            .rename(&[(v(), n.clone())])?,
        Rel::Tuple(fields) => {
            let mut acc = f.group()?;
            for (n, s) in fields {
                let col = scalar(db, f, s)?.rename(&[(v(), n.clone())])?;
                acc = acc.join_on(&col, &on_this())?;
            }
            acc
        }
        Rel::Group(s, _) => scalar(db, f, s)?
            .select_where(&RowExpr::not(RowExpr::IsNull(Box::new(RowExpr::Attr(v())))))?
            .rename(&[(v(), AttrName::oid())])?,
        Rel::AttrGroup(b, a, _) => rel(db, f, b)?
            .project(&[this(), a.clone()])?
            .select_where(&RowExpr::not(RowExpr::IsNull(Box::new(RowExpr::Attr(a.clone())))))?
            .rename(&[(a.clone(), AttrName::oid())])?,
        Rel::Deref { group, ty, comp } => {
            let g = rel(db, f, group)?.project(&[this(), AttrName::oid()])?;
            let rows = rvars::component_rows(db, ty, comp, &oids(&g, &AttrName::oid())?)?;
            g.join_on(&rows, &[(AttrName::oid(), AttrName::oid())])?
        }
        Rel::DerefType { group, ty } => {
            let g = rel(db, f, group)?.project(&[this(), AttrName::oid()])?;
            let rows = rvars::type_rows(db, ty, &oids(&g, &AttrName::oid())?)?;
            g.join_on(&rows, &[(AttrName::oid(), AttrName::oid())])?
        }
        Rel::SetOp(op, a, b) => {
            let x = rel(db, f, a)?;
            let y = rel(db, f, b)?;
            match op {
                SetOp::Union => x.union(&y)?,
                SetOp::Minus => x.minus(&y)?,
                SetOp::Intersect => x.intersect(&y)?,
                SetOp::Times => x.join_on(&y, &on_this())?,
                SetOp::Join => x.natural_join(&y)?,
            }
        }
        Rel::Where(b, c) => {
            let base = rel(db, f, b)?;
            let names: Vec<AttrName> = base.scheme().names().cloned().collect();
            let (ext, e) = lower(db, f, base, c)?;
            ext.select_where(&e)?.project(&names)?
        }
        Rel::Project(b, keep) => rel(db, f, b)?.project(&names_with_this(keep))?,
        Rel::Rename(b, pairs) => rel(db, f, b)?.rename(pairs)?,
        Rel::Replace(b, sets) => {
            let base = rel(db, f, b)?;
            let names: Vec<AttrName> = base.scheme().names().cloned().collect();
            let (ext, lowered) = lower_all(db, f, base, sets)?;
            ext.replace(&lowered)?.project(&names)?
        }
        Rel::Expand(b, a, _) => {
            let base = rel(db, f, b)?;
            rvars::expand_ref(db, &base, a)?
        }
        Rel::Summarize(b, by, adds) => {
            let mut ext = rel(db, f, b)?;
            let mut aggs = Vec::new();
            for (func, e, n) in adds {
                let (x, le) = lower(db, f, ext, e)?;
                ext = x;
                aggs.push(Aggregate::new(*func, le, n.clone()));
            }
            ext.summarize(&names_with_this(by), &aggs)?
        }
        Rel::Ov(b, conds) => {
            let base = rel(db, f, b)?;
            let key = [this(), AttrName::oid()];
            rvars::object_of(&base)?;
            let mut g = base.project(&key)?;
            for c in conds {
                let (ext, e) = lower(db, f, base.clone(), c)?;
                g = g.intersect(&ext.select_where(&e)?.project(&key)?)?;
            }
            base.semijoin(&g, &[(this(), this()), (AttrName::oid(), AttrName::oid())])?
        }
        Rel::ObjectOf(b) => {
            let base = rel(db, f, b)?;
            if !base.scheme().has_oid() {
                return Err(Error::NoOidAttribute);
            }
            base.project(&[this(), AttrName::oid()])?
        }
        Rel::Call { group, ty, method, args } => call(db, f, group, ty, method, args)?,
    })
}

fn call(db: &mut Database, f: &CFrame, group: &Rel, ty: &str, method: &str, args: &[Scalar]) -> Result<Relation> {
    let g = rel(db, f, group)?.project(&[this(), AttrName::oid()])?;
    let mut arg_vals: BTreeMap<Oid, Vec<Value>> = f.active.iter().map(|o| (*o, Vec::new())).collect();
    for a in args {
        for row in scalar(db, f, a)?.iter() {
            if let Some(vals) = row[0].as_oid().and_then(|c| arg_vals.get_mut(&c)) {
                vals.push(row[1].clone());
            }
        }
    }
    let mut callers: BTreeMap<Oid, BTreeSet<Oid>> = BTreeMap::new();
    let mut owner: BTreeMap<Oid, Oid> = BTreeMap::new();
    let mut disjoint = true;
    for row in g.iter() {
        let (Some(c), Some(t)) = (row[0].as_oid(), row[1].as_oid()) else { continue };
        callers.entry(c).or_default().insert(t);
        if owner.insert(t, c).is_some_and(|prev| prev != c) {
            disjoint = false;
        }
    }
    if disjoint {
        let targets: BTreeSet<Oid> = owner.keys().copied().collect();
        let per: BTreeMap<Oid, Vec<Value>> = owner.iter().map(|(t, c)| (*t, arg_vals[c].clone())).collect();
        let res = invoke(db, ty, method, &targets, &per)?;
        return g.join_on(&res, &[(AttrName::oid(), AttrName::oid())]);
    }
    let mut out = Relation::empty(with_this(&f.ty, &call_scheme(&db.state, ty, method)?)?);
    for (c, targets) in callers {
        let per: BTreeMap<Oid, Vec<Value>> = targets.iter().map(|t| (*t, arg_vals[&c].clone())).collect();
        let res = invoke(db, ty, method, &targets, &per)?;
        let tagged = Relation::singleton(this(), ScalarType::Ref(f.ty.clone()), Value::Oid(c))?.product(&res)?;
        out = out.union(&tagged)?;
    }
    Ok(out)
}

fn lower_all(
    db: &mut Database,
    f: &CFrame,
    mut ext: Relation,
    sets: &[(AttrName, Row)],
) -> Result<(Relation, Vec<(AttrName, RowExpr)>)> {
    let mut out = Vec::new();
    for (n, e) in sets {
        let (x, le) = lower(db, f, ext, e)?;
        ext = x;
        out.push((n.clone(), le));
    }
    Ok((ext, out))
}

/// Lowers a row expression against `base`, adding helper columns for
/// per-object values and group memberships it needs.
fn lower(db: &mut Database, f: &CFrame, base: Relation, r: &Row) -> Result<(Relation, RowExpr)> {
    let bx = Box::new;
    Ok(match r {
        Row::Attr(n, _) => (base, RowExpr::Attr(n.clone())),
        Row::Lit(val, t) => (base, RowExpr::typed_lit(val.clone(), t)),
        Row::Outer(s) => match &**s {
            Scalar::Lit(val, t) => (base, RowExpr::typed_lit(val.clone(), t)),
            _ => {
                let col = f.fresh("s");
                let sv = scalar(db, f, s)?.rename(&[(v(), col.clone())])?;
                (base.join_on(&sv, &on_this())?, RowExpr::Attr(col))
            }
        },
        Row::Arith(op, a, b) => {
            let (x, la) = lower(db, f, base, a)?;
            let (y, lb) = lower(db, f, x, b)?;
            (y, RowExpr::Arith(*op, bx(la), bx(lb)))
        }
        Row::Cmp(op, a, b) => {
            let (x, la) = lower(db, f, base, a)?;
            let (y, lb) = lower(db, f, x, b)?;
            (y, RowExpr::Cmp(*op, bx(la), bx(lb)))
        }
        Row::And(a, b) => {
            let (x, la) = lower(db, f, base, a)?;
            let (y, lb) = lower(db, f, x, b)?;
            (y, RowExpr::And(bx(la), bx(lb)))
        }
        Row::Or(a, b) => {
            let (x, la) = lower(db, f, base, a)?;
            let (y, lb) = lower(db, f, x, b)?;
            (y, RowExpr::Or(bx(la), bx(lb)))
        }
        Row::Neg(a) => {
            let (x, la) = lower(db, f, base, a)?;
            (x, RowExpr::Neg(bx(la)))
        }
        Row::Not(a) => {
            let (x, la) = lower(db, f, base, a)?;
            (x, RowExpr::Not(bx(la)))
        }
        Row::IsNull(a) => {
            let (x, la) = lower(db, f, base, a)?;
            (x, RowExpr::IsNull(bx(la)))
        }
        Row::IsType(a, t, exact) => {
            let (x, la) = lower(db, f, base, a)?;
            (x, RowExpr::In(bx(la), type_members(&db.state, t, *exact)))
        }
        Row::InGroup(a, g) => {
            let (x, la) = lower(db, f, base, a)?;
            let k = f.fresh("k");
            let flag = f.fresh("g");
            let x = x.extend(k.clone(), &la)?;
            let members = rel(db, f, g)?.project(&[this(), AttrName::oid()])?;
            let pairs = [(this(), this()), (k, AttrName::oid())];
            let yes = x.semijoin(&members, &pairs)?.extend(flag.clone(), &RowExpr::lit(true))?;
            let no = x.antijoin(&members, &pairs)?.extend(flag.clone(), &RowExpr::lit(false))?;
            (yes.union(&no)?, RowExpr::Attr(flag))
        }
    })
}

/// Value of `ir` for every active object, over `(#this) + scheme`.
fn value(db: &mut Database, f: &CFrame, ir: &Ir, scheme: &Scheme) -> Result<Relation> {
    let target = with_this(&f.ty, scheme)?;
    match ir {
        Ir::S(s, _) => {
            let name = scheme.attrs.last().map_or_else(v, |a| a.name.clone());
            scalar(db, f, s)?.rename(&[(v(), name)])?.reorder_to(&target)
        }
        Ir::R(r, _) => rel(db, f, r)?.reorder_to(&target),
    }
}

fn apply(db: &mut Database, f: &CFrame, cur: Relation, op: &WriteOp) -> Result<Relation> {
    let scheme = cur.scheme().clone();
    let names: Vec<AttrName> = scheme.names().cloned().collect();
    let bare = Scheme::new(scheme.attrs[1..].to_vec())?;
    Ok(match op {
        WriteOp::Assign(ir) => value(db, f, ir, &bare)?,
        WriteOp::Insert(ir) => cur.union(&value(db, f, ir, &bare)?)?,
        WriteOp::Delete(None) => Relation::empty(scheme),
        WriteOp::Delete(Some(c)) => {
            let (ext, e) = lower(db, f, cur, c)?;
            ext.select_where(&RowExpr::not(e))?.project(&names)?
        }
        WriteOp::Update(sets, c) => {
            let (ext, e) = match c {
                Some(c) => lower(db, f, cur, c)?,
                None => (cur, RowExpr::lit(true)),
            };
            let (ext, lowered) = lower_all(db, f, ext, sets)?;
            let kept = ext.select_where(&RowExpr::not(e.clone()))?;
            let changed = ext.select_where(&e)?.replace(&lowered)?;
            kept.union(&changed)?.project(&names)?
        }
    })
}

fn write(db: &mut Database, f: &mut CFrame, target: &Target, op: &WriteOp) -> Result<()> {
    match target {
        Target::Local(n) => {
            let all = f.locals.get(n).cloned().ok_or_else(|| Error::UnknownName(n.clone()))?;
            let g = f.group()?;
            let cur = all.semijoin(&g, &on_this())?;
            let new = apply(db, f, cur, op)?;
            let rest = all.antijoin(&g, &on_this())?;
            f.locals.insert(n.clone(), rest.union(&new)?);
            Ok(())
        }
        Target::ThisComp(c) => {
            let ty = f.ty.clone();
            let cur = rvars::component_rows(db, &ty, c, &f.active)?.rename(&[(AttrName::oid(), this())])?;
            let new = apply(db, f, cur, op)?.rename(&[(this(), AttrName::oid())])?;
            write_comp(db, &ty, c, &f.active, &new)
        }
        Target::Global(_) | Target::GroupComp { .. } => {
            for o in f.active.clone() {
                let mut of = f.object_frame(o)?;
                interp::write(db, &mut of, target, op)?;
            }
            Ok(())
        }
    }
}

fn truthy(r: &Relation) -> BTreeSet<Oid> {
    r.iter().filter(|t| t[1].as_bool() == Some(true)).filter_map(|t| t[0].as_oid()).collect()
}

fn exec_block(db: &mut Database, f: &mut CFrame, body: &[Stmt], group: &BTreeSet<Oid>) -> Result<()> {
    for s in body {
        let g: BTreeSet<Oid> = group.difference(&f.done).copied().collect();
        if g.is_empty() {
            break;
        }
        f.active = g;
        exec(db, f, s)?;
    }
    Ok(())
}

fn exec(db: &mut Database, f: &mut CFrame, s: &Stmt) -> Result<()> {
    match s {
        Stmt::Write { target, op } => write(db, f, target, op),
        Stmt::If { cond, then, els } => {
            let all = f.active.clone();
            let yes = truthy(&scalar(db, f, cond)?);
            let no: BTreeSet<Oid> = all.difference(&yes).copied().collect();
            exec_block(db, f, then, &yes)?;
            exec_block(db, f, els, &no)?;
            f.active = all;
            Ok(())
        }
        Stmt::DoWhile { body, cond } => {
            let all = f.active.clone();
            let mut g = all.clone();
            let mut n = 0;
            loop {
                exec_block(db, f, body, &g)?;
                n += 1;
                g = g.difference(&f.done).copied().collect();
                if g.is_empty() {
                    break;
                }
                f.active = g;
                g = truthy(&scalar(db, f, cond)?);
                if g.is_empty() {
                    break;
                }
                if n >= LOOP_CAP {
                    return Err(Error::LoopLimitExceeded(LOOP_CAP));
                }
            }
            f.active = all;
            Ok(())
        }
        Stmt::Return(val) => {
            if let Some(val) = val {
                let scheme = f.result_scheme.clone().ok_or_else(|| Error::eval("RETURN with a value outside a method"))?;
                let r = value(db, f, val, &scheme)?;
                f.result = f.result.union(&r)?;
            }
            f.done.extend(f.active.iter().copied());
            Ok(())
        }
        Stmt::Exec(r) => rel(db, f, r).map(|_| ()),
    }
}

/// Runs a method body once for the whole group `targets`; the result holds
/// `(#this, value fields)`.
pub fn run_program(
    db: &mut Database,
    p: &Program,
    targets: &BTreeSet<Oid>,
    args: &BTreeMap<Oid, Vec<Value>>,
) -> Result<Relation> {
    let mut f = CFrame::new(&p.ty, targets.clone())?;
    for (i, (n, t)) in p.params.iter().enumerate() {
        let scheme = with_this(&p.ty, &Scheme::new(vec![Attr::new(V, t.clone())])?)?;
        let rows = targets.iter().map(|o| vec![Value::Oid(*o), args[o][i].clone()]);
        f.params.insert(n.clone(), Relation::from_tuples(scheme, rows)?);
    }
    for (n, (vt, s)) in &p.locals {
        let scheme = with_this(&p.ty, s)?;
        let rows: Vec<Vec<Value>> = if vt.is_scalar() {
            targets.iter().map(|o| vec![Value::Oid(*o), Value::Undefined]).collect()
        } else {
            Vec::new()
        };
        f.locals.insert(n.clone(), Relation::from_tuples(scheme, rows)?);
    }
    if let Some(s) = &p.result {
        f.result = Relation::empty(with_this(&p.ty, s)?);
        f.result_scheme = Some(s.clone());
    }
    exec_block(db, &mut f, &p.body, targets)?;
    if p.result.is_none() {
        f.active = targets.clone();
        return f.group();
    }
    Ok(f.result)
}

/// Value of a computed component for the objects `oids`, over `(#this) + scheme`.
pub fn eval_computed(db: &mut Database, ty: &str, expr: &Ir, scheme: &Scheme, oids: &BTreeSet<Oid>) -> Result<Relation> {
    let f = CFrame::new(ty, oids.clone())?;
    value(db, &f, expr, scheme)
}
