//! Translation of per-object expressions and method bodies into set-at-a-time
//! programs, their execution over object groups, and the per-object oracle.

pub mod analyze;
pub mod compile;
pub mod interp;
pub mod ir;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::Datelike;

use crate::error::{Error, Result};
use crate::relalg::{Attr, AttrName, Date, Oid, Relation, RowExpr, ScalarType, Scheme, Tuple, Value};
use crate::storage::{Database, GlobalImpl, Mode, State};
use crate::typesys::{Impl, ValueType};

pub use ir::{ComputedIr, Ir, Program, Rel, Row, Scalar, Stmt, Target, WriteOp};

pub const LOOP_CAP: usize = 10_000;
pub const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone)]
enum Entry {
    Program(Arc<Program>),
    Computed(Arc<ComputedIr>),
    Global(Arc<Ir>),
}

/// Analyzed realizations, keyed by (realizing type, component).
#[derive(Debug, Default)]
pub struct Cache {
    map: HashMap<(String, String), Entry>,
}

impl Cache {
    pub fn clear(&mut self) {
        self.map.clear();
    }
}

pub fn today() -> Value {
    let d = chrono::Local::now().date_naive();
    Date::new(d.day() as u8, d.month() as u8, d.year()).map_or(Value::Undefined, Value::Date)
}

/// Evaluates an expression without attribute references.
pub(crate) fn eval_const(e: &RowExpr) -> Result<Value> {
    let (b, _) = e.bind(&Scheme::default())?;
    b.eval(&[])
}

/// Applies the operator at the root of `s` to already lowered operands.
pub(crate) fn scalar_node(s: &Scalar, mut kids: Vec<RowExpr>) -> RowExpr {
    let mut next = || Box::new(kids.remove(0));
    match s {
        Scalar::Arith(op, ..) => {
            let a = next();
            RowExpr::Arith(*op, a, next())
        }
        Scalar::Cmp(op, ..) => {
            let a = next();
            RowExpr::Cmp(*op, a, next())
        }
        Scalar::And(..) => {
            let a = next();
            RowExpr::And(a, next())
        }
        Scalar::Or(..) => {
            let a = next();
            RowExpr::Or(a, next())
        }
        Scalar::Neg(_) => RowExpr::Neg(next()),
        Scalar::Not(_) => RowExpr::Not(next()),
        Scalar::IsNull(_) => RowExpr::IsNull(next()),
        other => unreachable!("{other:?} is not an operator"),
    }
}

/// OID values of the objects of `ty` (exactly of `ty` when `exact`).
pub(crate) fn type_members(state: &State, ty: &str, exact: bool) -> Arc<BTreeSet<Value>> {
    let set = if exact {
        state.oids.rows.iter().filter(|(_, t)| t.as_str() == ty).map(|(o, _)| Value::Oid(*o)).collect()
    } else {
        state.oids.members(&state.types, ty).into_iter().map(Value::Oid).collect()
    };
    Arc::new(set)
}

pub(crate) fn too_many_rows(attr: &AttrName) -> Error {
    Error::eval(format!("more than one row where a single {attr} value is expected"))
}

fn source(state: &State, realizer: &str, comp: &str) -> Result<Impl> {
    state
        .types
        .class(realizer)?
        .impls
        .get(comp)
        .cloned()
        .ok_or_else(|| Error::UnrealizedComponent { ty: realizer.to_string(), component: comp.to_string() })
}

pub(crate) fn program_for(db: &mut Database, realizer: &str, method: &str) -> Result<Arc<Program>> {
    let key = (realizer.to_string(), method.to_string());
    if let Some(Entry::Program(p)) = db.cache.map.get(&key) {
        return Ok(p.clone());
    }
    let Impl::Method(src) = source(&db.state, realizer, method)? else {
        return Err(Error::ImplKindMismatch(format!("{realizer}.{method}")));
    };
    let p = Arc::new(analyze::method(&db.state, realizer, method, &src)?);
    db.cache.map.insert(key, Entry::Program(p.clone()));
    Ok(p)
}

pub(crate) fn computed_for(db: &mut Database, realizer: &str, comp: &str) -> Result<Arc<ComputedIr>> {
    let key = (realizer.to_string(), comp.to_string());
    if let Some(Entry::Computed(c)) = db.cache.map.get(&key) {
        return Ok(c.clone());
    }
    let Impl::Computed(src) = source(&db.state, realizer, comp)? else {
        return Err(Error::ImplKindMismatch(format!("{realizer}.{comp}")));
    };
    let c = Arc::new(analyze::computed(&db.state, realizer, comp, &src)?);
    db.cache.map.insert(key, Entry::Computed(c.clone()));
    Ok(c)
}

/// Value of a global variable as a relation (a scalar global is a one-row relation).
pub fn eval_global(db: &mut Database, name: &str) -> Result<Relation> {
    let g = db.state.globals.get(name).cloned().ok_or_else(|| Error::UnknownName(name.to_string()))?;
    let scheme = analyze::value_scheme(&db.state, name, &g.ty)?;
    match g.imp {
        GlobalImpl::Stored(r) => Ok(r),
        GlobalImpl::Computed(src) => {
            let key = ("#global".to_string(), name.to_string());
            let ir = match db.cache.map.get(&key) {
                Some(Entry::Global(ir)) => ir.clone(),
                _ => {
                    let ir = Arc::new(analyze::global(&db.state, name, &g.ty, &src)?);
                    db.cache.map.insert(key, Entry::Global(ir.clone()));
                    ir
                }
            };
            let frame = interp::Frame::top();
            interp::eval_into(db, &frame, &ir, &scheme)
        }
    }
}

/// Rows `(OID, fields)` of computed component `comp` realized by `realizer`
/// for the objects `oids`.
pub fn eval_computed(db: &mut Database, realizer: &str, comp: &str, oids: &BTreeSet<Oid>) -> Result<Relation> {
    let key = (realizer.to_string(), comp.to_string());
    if db.computing.contains(&key) {
        return Err(Error::CycleDetected(format!("{realizer}.{comp}")));
    }
    let c = computed_for(db, realizer, comp)?;
    let vt = db.state.types.component(realizer, comp)?.spec.value_type()?.clone();
    let mut attrs = vec![Attr::new(AttrName::oid(), ScalarType::Ref(realizer.to_string()))];
    attrs.extend(db.state.types.value_attrs(comp, &vt)?);
    let scheme = Scheme::new(attrs)?;
    let value_scheme = analyze::value_scheme(&db.state, comp, &vt)?;
    db.computing.push(key);
    let res = match db.mode {
        Mode::Oracle => {
            let mut out = Relation::empty(scheme.clone());
            let mut r = Ok(());
            for o in oids {
                let frame = interp::Frame::object(realizer, *o);
                match interp::eval_into(db, &frame, &c.expr, &value_scheme) {
                    Ok(v) => {
                        let with_oid = Relation::singleton(AttrName::oid(), scheme.attrs[0].ty.clone(), Value::Oid(*o))?
                            .product(&v)?;
                        out = out.union(&with_oid.reorder_to(&scheme)?)?;
                    }
                    Err(e) => {
                        r = Err(e);
                        break;
                    }
                }
            }
            r.map(|_| out)
        }
        Mode::Compiled => compile::eval_computed(db, realizer, &c.expr, &value_scheme, oids)
            .and_then(|r| r.rename(&[(AttrName::this(), AttrName::oid())]))
            .and_then(|r| r.reorder_to(&scheme)),
    };
    db.computing.pop();
    let mut res = res?;
    if vt.is_single_row() {
        let mut seen = BTreeSet::new();
        for t in res.iter() {
            if !seen.insert(t[0].clone()) {
                return Err(Error::eval(format!("computed {realizer}.{comp} yields more than one row for {}", t[0])));
            }
        }
        for o in oids {
            if !seen.contains(&Value::Oid(*o)) {
                let mut row: Tuple = vec![Value::Oid(*o)];
                row.resize(scheme.len(), Value::Undefined);
                res.insert(row)?;
            }
        }
    }
    Ok(res)
}

/// Scheme `(OID, value fields)` of the result of invoking `ty.method`.
pub fn call_scheme(state: &State, ty: &str, method: &str) -> Result<Scheme> {
    let spec = state.types.component(ty, method)?.spec;
    let mut attrs = vec![Attr::new(AttrName::oid(), ScalarType::Ref(ty.to_string()))];
    if let Some(vt) = &spec.ty {
        attrs.extend(state.types.value_attrs(method, vt)?);
    }
    Scheme::new(attrs)
}

/// Group invocation of `ty.method` on `targets`, with each target's
/// arguments. Targets are partitioned by the type realizing the method for
/// them; the result holds `(OID, value fields)`.
pub fn invoke(
    db: &mut Database,
    ty: &str,
    method: &str,
    targets: &BTreeSet<Oid>,
    args: &BTreeMap<Oid, Vec<Value>>,
) -> Result<Relation> {
    let spec = db.state.types.component(ty, method)?.spec;
    let params = spec.params.clone().ok_or_else(|| Error::ImplKindMismatch(format!("{ty}.{method}")))?;
    let scheme = call_scheme(&db.state, ty, method)?;
    let mut typed: BTreeMap<Oid, Vec<Value>> = BTreeMap::new();
    let mut parts: BTreeMap<String, BTreeSet<Oid>> = BTreeMap::new();
    for o in targets {
        let t = db.state.oids.type_of(*o)?.to_string();
        if !db.state.types.is_subtype(&t, ty) {
            return Err(Error::TypeMismatch(format!("{o} is not a {ty}")));
        }
        let given = args.get(o).cloned().unwrap_or_default();
        if given.len() != params.len() {
            return Err(Error::ArityMismatch { method: format!("{ty}.{method}"), expected: params.len(), got: given.len() });
        }
        let mut vals = Vec::new();
        for ((p, pt), v) in params.iter().zip(given) {
            let shown = v.to_string();
            vals.push(
                v.coerce(pt)
                    .ok_or_else(|| Error::TypeMismatch(format!("argument {p} of {method} expects {pt}, got {shown}")))?,
            );
        }
        typed.insert(*o, vals);
        let (realizer, _) = db.state.types.require_realization(&t, method)?;
        parts.entry(realizer).or_default().insert(*o);
    }
    if db.depth >= MAX_CALL_DEPTH {
        return Err(Error::CallDepthExceeded(MAX_CALL_DEPTH));
    }
    let mut programs = BTreeMap::new();
    for realizer in parts.keys() {
        programs.insert(realizer.clone(), program_for(db, realizer, method)?);
    }
    db.depth += 1;
    let res = run_parts(db, &scheme, &parts, &programs, &typed);
    db.depth -= 1;
    let mut out = res?;
    if spec.ty.as_ref().is_none_or(ValueType::is_single_row) {
        let present: BTreeSet<Value> = out.iter().map(|t| t[0].clone()).collect();
        for o in targets {
            if !present.contains(&Value::Oid(*o)) {
                let mut row: Tuple = vec![Value::Oid(*o)];
                row.resize(scheme.len(), Value::Undefined);
                out.insert(row)?;
            }
        }
    }
    Ok(out)
}

fn run_parts(
    db: &mut Database,
    scheme: &Scheme,
    parts: &BTreeMap<String, BTreeSet<Oid>>,
    programs: &BTreeMap<String, Arc<Program>>,
    args: &BTreeMap<Oid, Vec<Value>>,
) -> Result<Relation> {
    let mut out = Relation::empty(scheme.clone());
    match db.mode {
        Mode::Oracle => {
            let by_oid: BTreeMap<Oid, &str> =
                parts.iter().flat_map(|(r, os)| os.iter().map(move |o| (*o, r.as_str()))).collect();
            for (o, realizer) in by_oid {
                let prog = &programs[realizer];
                let res = interp::run_program(db, prog, o, &args[&o])?;
                let with_oid = Relation::singleton(AttrName::oid(), scheme.attrs[0].ty.clone(), Value::Oid(o))?;
                let rows = match res {
                    Some(r) => with_oid.product(&r)?,
                    None => with_oid,
                };
                out = out.union(&rows.reorder_to(scheme)?)?;
            }
        }
        Mode::Compiled => {
            for (realizer, part) in parts {
                let prog = &programs[realizer];
                let part_args: BTreeMap<Oid, Vec<Value>> = part.iter().map(|o| (*o, args[o].clone())).collect();
                let res = compile::run_program(db, prog, part, &part_args)?;
                let rows = res.rename(&[(AttrName::this(), AttrName::oid())])?;
                out = out.union(&rows.reorder_to(scheme)?)?;
            }
        }
    }
    Ok(out)
}

/// Replaces the rows of component `comp` for the `ty` objects `oids` with
/// `rows` (scheme `(OID, fields)`). Objects whose realization computes the
/// component are left alone with a warning.
pub(crate) fn write_comp(db: &mut Database, ty: &str, comp: &str, oids: &BTreeSet<Oid>, rows: &Relation) -> Result<()> {
    let owner = db.state.types.component(ty, comp)?.owner;
    let mut stored = BTreeSet::new();
    for o in oids {
        let t = db.state.oids.type_of(*o)?.to_string();
        match db.state.types.require_realization(&t, comp)? {
            (_, Impl::Stored) => {
                stored.insert(*o);
            }
            (realizer, _) => db.warn(format!("write to computed component {realizer}.{comp} ignored")),
        }
    }
    for t in rows.iter() {
        match t[0].as_oid() {
            Some(o) if oids.contains(&o) => {}
            _ => return Err(Error::eval(format!("row for {} outside the written group", t[0]))),
        }
    }
    if stored.is_empty() {
        return Ok(());
    }
    let g = crate::rvars::group(ty, stored.iter().copied());
    let rows = rows.semijoin(&g, &[(AttrName::oid(), AttrName::oid())])?;
    db.state.write(&owner, comp, &stored, &rows)
}

/// Components read by an analyzed expression, as (type, component) pairs;
/// `None` stands for every attribute of the type.
fn deps_rel(ctx: &str, r: &Rel, out: &mut BTreeSet<(String, Option<String>)>) {
    match r {
        Rel::ThisComp(c) => {
            out.insert((ctx.to_string(), Some(c.clone())));
        }
        Rel::TypeVar(t) => {
            out.insert((t.clone(), None));
        }
        Rel::CompVar(t, c) => {
            out.insert((t.clone(), Some(c.clone())));
        }
        Rel::Deref { group, ty, comp } => {
            out.insert((ty.clone(), Some(comp.clone())));
            deps_rel(ctx, group, out);
        }
        Rel::DerefType { group, ty } => {
            out.insert((ty.clone(), None));
            deps_rel(ctx, group, out);
        }
        Rel::Expand(b, _, t) => {
            out.insert((t.clone(), None));
            deps_rel(ctx, b, out);
        }
        Rel::Global(_) | Rel::Catalog(_) | Rel::Local(_) | Rel::Members(_) => {}
        Rel::FromScalar(s, _) | Rel::Group(s, _) => deps_scalar(ctx, s, out),
        Rel::Tuple(fs) => fs.iter().for_each(|(_, s)| deps_scalar(ctx, s, out)),
        Rel::AttrGroup(b, ..) | Rel::Project(b, _) | Rel::Rename(b, _) | Rel::ObjectOf(b) => deps_rel(ctx, b, out),
        Rel::SetOp(_, a, b) => {
            deps_rel(ctx, a, out);
            deps_rel(ctx, b, out);
        }
        Rel::Where(b, row) => {
            deps_rel(ctx, b, out);
            deps_row(ctx, row, out);
        }
        Rel::Replace(b, sets) => {
            deps_rel(ctx, b, out);
            sets.iter().for_each(|(_, r)| deps_row(ctx, r, out));
        }
        Rel::Summarize(b, _, adds) => {
            deps_rel(ctx, b, out);
            adds.iter().for_each(|(_, r, _)| deps_row(ctx, r, out));
        }
        Rel::Ov(b, conds) => {
            deps_rel(ctx, b, out);
            conds.iter().for_each(|r| deps_row(ctx, r, out));
        }
        Rel::Call { group, args, .. } => {
            deps_rel(ctx, group, out);
            args.iter().for_each(|s| deps_scalar(ctx, s, out));
        }
    }
}

fn deps_scalar(ctx: &str, s: &Scalar, out: &mut BTreeSet<(String, Option<String>)>) {
    match s {
        Scalar::Lit(..) | Scalar::This(_) | Scalar::Param(..) | Scalar::Local(..) | Scalar::Today => {}
        Scalar::Arith(_, a, b) | Scalar::Cmp(_, a, b) | Scalar::And(a, b) | Scalar::Or(a, b) => {
            deps_scalar(ctx, a, out);
            deps_scalar(ctx, b, out);
        }
        Scalar::Neg(a) | Scalar::Not(a) | Scalar::IsNull(a) | Scalar::IsType(a, ..) => deps_scalar(ctx, a, out),
        Scalar::Exist(r) | Scalar::Single(r, ..) => deps_rel(ctx, r, out),
    }
}

fn deps_row(ctx: &str, r: &Row, out: &mut BTreeSet<(String, Option<String>)>) {
    match r {
        Row::Attr(..) | Row::Lit(..) => {}
        Row::Outer(s) => deps_scalar(ctx, s, out),
        Row::Arith(_, a, b) | Row::Cmp(_, a, b) | Row::And(a, b) | Row::Or(a, b) => {
            deps_row(ctx, a, out);
            deps_row(ctx, b, out);
        }
        Row::Neg(a) | Row::Not(a) | Row::IsNull(a) | Row::IsType(a, ..) => deps_row(ctx, a, out),
        Row::InGroup(a, g) => {
            deps_row(ctx, a, out);
            deps_rel(ctx, g, out);
        }
    }
}

fn deps_ir(ctx: &str, ir: &Ir, out: &mut BTreeSet<(String, Option<String>)>) {
    match ir {
        Ir::S(s, _) => deps_scalar(ctx, s, out),
        Ir::R(r, _) => deps_rel(ctx, r, out),
    }
}

/// Type-checks every realization and rejects computed components whose
/// definitions depend on themselves through other computed components.
pub fn check_realizations(state: &State) -> Result<()> {
    let mut edges: BTreeMap<(String, String), BTreeSet<(String, String)>> = BTreeMap::new();
    for (ty, class) in &state.types.classes {
        for (comp, imp) in &class.impls {
            match imp {
                Impl::Stored => {}
                Impl::Method(src) => {
                    analyze::method(state, ty, comp, src)?;
                }
                Impl::Computed(src) => {
                    let c = analyze::computed(state, ty, comp, src)?;
                    let mut deps = BTreeSet::new();
                    deps_ir(ty, &c.expr, &mut deps);
                    let mut targets = BTreeSet::new();
                    for (t, dc) in deps {
                        let mut types = state.types.descendants(&t);
                        types.insert(t.clone());
                        for d in types {
                            let comps: Vec<String> = match &dc {
                                Some(c) => vec![c.clone()],
                                None => crate::rvars::attributes(state, &d)?.into_iter().map(|(n, _)| n).collect(),
                            };
                            for c in comps {
                                if let Ok(Some((r, Impl::Computed(_)))) = state.types.realization(&d, &c) {
                                    targets.insert((r, c));
                                }
                            }
                        }
                    }
                    edges.insert((ty.clone(), comp.clone()), targets);
                }
            }
        }
    }
    fn visit(
        n: &(String, String),
        edges: &BTreeMap<(String, String), BTreeSet<(String, String)>>,
        state: &mut BTreeMap<(String, String), u8>,
    ) -> Result<()> {
        match state.get(n) {
            Some(2) => return Ok(()),
            Some(1) => return Err(Error::CycleDetected(format!("{}.{}", n.0, n.1))),
            _ => {}
        }
        state.insert(n.clone(), 1);
        if let Some(next) = edges.get(n) {
            for m in next {
                visit(m, edges, state)?;
            }
        }
        state.insert(n.clone(), 2);
        Ok(())
    }
    let mut marks = BTreeMap::new();
    for n in edges.keys() {
        visit(n, &edges, &mut marks)?;
    }
    Ok(())
}
