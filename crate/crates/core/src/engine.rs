//! Command execution: dispatch, per-command atomicity, transactions and
//! integrity enforcement after every change.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::lang::{self, AlterAction, Command, Expr, GlobalRealize, KeyDecl, RealizeBody, RealizeNames};
use crate::rcompiler::{self, analyze, interp, Ir};
use crate::relalg::{AttrName, KeyKind, KeySpec, Oid, Relation, ScalarType, Tuple, Value};
use crate::rvars;
use crate::storage::{Database, GlobalImpl, GlobalVar, State};
use crate::typesys::{Impl, ValueType, OBJECT, VALUE_ATTR};

/// Result of one executed command.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Done(String),
    Created(Oid),
    Table(Relation),
}

/// A failed script command and the line it starts on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptError {
    pub line: u32,
    pub error: Error,
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

impl std::error::Error for ScriptError {}

fn done(msg: impl Into<String>) -> Output {
    Output::Done(msg.into())
}

fn typed_oids(rel: &Relation) -> Result<BTreeSet<Oid>> {
    rvars::oids_in(rel, &AttrName::oid())
}

impl Database {
    /// Executes one command atomically: on any error, including an
    /// integrity violation detected afterwards, the state is left as it was.
    pub fn execute(&mut self, cmd: &Command) -> Result<Output> {
        self.warnings.clear();
        let snapshot = self.state.clone();
        let tx = self.tx.clone();
        let tx_failed = self.tx_failed;
        let res = self.dispatch(cmd).and_then(|out| {
            if self.state != snapshot {
                self.enforce()?;
            }
            Ok(out)
        });
        if res.is_err() {
            let next = self.state.oids.next;
            self.state = snapshot;
            self.state.oids.next = self.state.oids.next.max(next);
            self.tx = tx;
            self.tx_failed = tx_failed || self.tx.is_some();
            self.cache.clear();
        }
        self.depth = 0;
        self.computing.clear();
        res
    }

    /// Parses and executes a single command.
    pub fn execute_str(&mut self, src: &str) -> Result<Output> {
        let cmd = lang::parse_command(src)?;
        self.execute(&cmd)
    }

    /// Evaluates an expression against the current state.
    pub fn query(&mut self, src: &str) -> Result<Relation> {
        let e = lang::parse_expr(src)?;
        match self.execute(&Command::Query(e))? {
            Output::Table(r) => Ok(r),
            other => Err(Error::eval(format!("query produced {other:?}"))),
        }
    }

    /// Runs a script, reporting each command's outcome to `report` as it
    /// completes. The first error stops the script, except inside a
    /// transaction: there the failed command is undone, the transaction can
    /// only be rolled back, and the error is final only if it is not.
    pub fn run_script_with<F>(&mut self, src: &str, mut report: F) -> std::result::Result<(), ScriptError>
    where
        F: FnMut(&Database, &lang::SpannedCommand, std::result::Result<&Output, &Error>),
    {
        let cmds = lang::parse_script(src).map_err(|error| {
            let line = match error {
                Error::Syntax { line, .. } => line,
                _ => 0,
            };
            ScriptError { line, error }
        })?;
        let mut pending: Option<ScriptError> = None;
        for sc in cmds {
            let line = sc.span.line;
            match self.execute(&sc.cmd) {
                Ok(out) => {
                    report(self, &sc, Ok(&out));
                    if !self.in_transaction() {
                        pending = None;
                    }
                }
                Err(error) => {
                    report(self, &sc, Err(&error));
                    if !self.in_transaction() {
                        return Err(pending.unwrap_or(ScriptError { line, error }));
                    }
                    pending.get_or_insert(ScriptError { line, error });
                }
            }
        }
        match pending {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Runs a script and collects the outputs.
    pub fn run_script(&mut self, src: &str) -> std::result::Result<Vec<Output>, ScriptError> {
        let mut outs = Vec::new();
        self.run_script_with(src, |_, _, r| {
            if let Ok(o) = r {
                outs.push(o.clone());
            }
        })?;
        Ok(outs)
    }

    fn dispatch(&mut self, cmd: &Command) -> Result<Output> {
        match cmd {
            Command::DescribeTuple { name, attrs } => {
                self.state.types.define_tuple(name, attrs)?;
                self.schema_changed()?;
                Ok(done(format!("tuple type {name} defined")))
            }
            Command::CreateClass { name, parents, components, keys } => {
                if self.state.globals.contains_key(name) {
                    return Err(Error::DuplicateName(name.clone()));
                }
                self.state.types.create_class(name, parents, components, keys)?;
                self.schema_changed()?;
                Ok(done(format!("class {name} created")))
            }
            Command::AlterClass { name, actions } => {
                for a in actions {
                    self.alter(name, a)?;
                }
                self.schema_changed()?;
                Ok(done(format!("class {name} altered")))
            }
            Command::Drop(name) => self.drop_named(name),
            Command::CreateGlobal { name, ty, keys, realize } => self.create_global(name, ty, keys, realize),
            Command::New { ty, args } => self.new_object(ty, args),
            Command::Destroy(e) => {
                let (g, _) = analyze::Env::top(&self.state).group(e)?;
                let rel = interp::rel(self, &interp::Frame::top(), &g)?;
                let oids = typed_oids(&rel)?;
                self.run_destructors(&oids)?;
                self.state.destroy(&oids)?;
                Ok(done(format!("{} destroyed", plural(oids.len(), "object"))))
            }
            Command::Execute(e) => {
                self.eval(e)?;
                Ok(done("executed"))
            }
            Command::Insert { target, value } => {
                self.write(&lang::Stmt::Insert { target: target.clone(), value: value.clone() })
            }
            Command::Delete { target, cond } => self.write(&lang::Stmt::Delete { target: target.clone(), cond: cond.clone() }),
            Command::Update { target, sets, cond } => {
                self.write(&lang::Stmt::Update { target: target.clone(), sets: sets.clone(), cond: cond.clone() })
            }
            Command::Assign { target, value } => {
                self.write(&lang::Stmt::Assign { target: target.clone(), value: value.clone() })
            }
            Command::Query(e) => Ok(Output::Table(self.eval(e)?)),
            Command::If { cond, then, els } => {
                let c = analyze::Env::top(&self.state).scalar(cond)?;
                if c.ty() != ScalarType::Boolean {
                    return Err(Error::NonBooleanCondition(lang::pretty::expr(cond)));
                }
                match interp::scalar(self, &interp::Frame::top(), &c)? {
                    Value::Bool(true) => self.dispatch(then),
                    _ => match els {
                        Some(e) => self.dispatch(e),
                        None => Ok(done("condition not met")),
                    },
                }
            }
            Command::Begin => {
                if self.tx.is_some() {
                    return Err(Error::Transaction("a transaction is already open".into()));
                }
                self.tx = Some(self.state.clone());
                self.tx_failed = false;
                Ok(done("transaction started"))
            }
            Command::Commit => {
                if self.tx.is_none() {
                    return Err(Error::Transaction("no open transaction".into()));
                }
                if self.tx_failed {
                    self.rollback();
                    return Err(Error::Transaction("a command of the transaction failed; rolled back".into()));
                }
                self.tx = None;
                Ok(done("committed"))
            }
            Command::Rollback => {
                if self.tx.is_none() {
                    return Err(Error::Transaction("no open transaction".into()));
                }
                self.rollback();
                Ok(done("rolled back"))
            }
        }
    }

    fn rollback(&mut self) {
        if let Some(saved) = self.tx.take() {
            let next = self.state.oids.next;
            self.state = saved;
            self.state.oids.next = self.state.oids.next.max(next);
            self.cache.clear();
        }
        self.tx_failed = false;
    }

    fn schema_changed(&mut self) -> Result<()> {
        self.cache.clear();
        self.state.reconcile()?;
        rcompiler::check_realizations(&self.state)
    }

    fn eval(&mut self, e: &Expr) -> Result<Relation> {
        let ir = analyze::Env::top(&self.state).expr(e)?;
        let f = interp::Frame::top();
        match &ir {
            Ir::R(_, scheme) => interp::eval_into(self, &f, &ir, scheme),
            Ir::S(s, t) => {
                let v = interp::scalar(self, &f, s)?;
                let name = match e.as_path() {
                    Some(p) => p.last().cloned().unwrap_or_default(),
                    None => VALUE_ATTR.to_string(),
                };
                Relation::singleton(name.as_str(), t.clone(), v)
            }
        }
    }

    fn write(&mut self, stmt: &lang::Stmt) -> Result<Output> {
        let st = analyze::write(&analyze::Env::top(&self.state), stmt)?;
        let mut f = interp::Frame::top();
        interp::exec(self, &mut f, &st)?;
        Ok(done("ok"))
    }

    fn alter(&mut self, ty: &str, a: &AlterAction) -> Result<()> {
        let types = &mut self.state.types;
        if ty == OBJECT {
            return Err(Error::Unsupported("the root type cannot be altered".into()));
        }
        match a {
            AlterAction::Add(d) => {
                let scalar_key = !d.keys.is_empty() && !matches!(d.ty, Some(lang::TypeExpr::SetOf(_)));
                if scalar_key && !self.state.oids.members(types, ty).is_empty() {
                    return Err(Error::KeyViolation(format!(
                        "{ty}.{}: a keyed component cannot be added while objects exist",
                        d.name
                    )));
                }
                types.add_component(ty, d)
            }
            AlterAction::Drop(c) => types.drop_component(ty, c),
            AlterAction::Alter(d) => types.alter_component(ty, d),
            AlterAction::AddKey(k) => types.add_key(ty, k),
            AlterAction::Realize { names, body } => {
                let names: Vec<String> = match names {
                    RealizeNames::List(ns) => ns.clone(),
                    RealizeNames::All => {
                        let own = &types.class(ty)?.components;
                        let want_method = matches!(body, RealizeBody::Block(_));
                        own.iter().filter(|c| c.is_method() == want_method).map(|c| c.name.clone()).collect()
                    }
                };
                let imp = match body {
                    RealizeBody::Stored => Impl::Stored,
                    RealizeBody::Expr(e) => Impl::Computed(lang::pretty::expr(e)),
                    RealizeBody::Block(b) => Impl::Method(lang::pretty::body(b)),
                };
                for n in names {
                    types.realize(ty, &n, imp.clone())?;
                }
                Ok(())
            }
        }
    }

    fn global_refs(&self, ty: &str) -> Option<String> {
        self.state.globals.iter().find_map(|(n, g)| {
            let attrs = self.state.types.value_attrs(n, &g.ty).ok()?;
            attrs.iter().any(|a| a.ty == ScalarType::Ref(ty.to_string())).then(|| format!("global {n} refers to it"))
        })
    }

    fn drop_named(&mut self, name: &str) -> Result<Output> {
        if self.state.globals.remove(name).is_some() {
            self.cache.clear();
            rcompiler::check_realizations(&self.state)
                .map_err(|e| Error::TypeInUse { ty: name.to_string(), reason: e.to_string() })?;
            return Ok(done(format!("global {name} dropped")));
        }
        if self.state.types.tuples.contains_key(name) {
            let used = self.state.types.classes.values().flat_map(|c| c.components.iter().map(move |s| (c, s))).find(
                |(_, s)| matches!(&s.ty, Some(ValueType::Tuple(t)) | Some(ValueType::Set(crate::typesys::Elem::Tuple(t))) if t == name),
            );
            if let Some((c, s)) = used {
                return Err(Error::TypeInUse { ty: name.into(), reason: format!("{}.{} uses it", c.name, s.name) });
            }
            if let Some((g, _)) = self.state.globals.iter().find(|(_, g)| {
                matches!(&g.ty, ValueType::Tuple(t) | ValueType::Set(crate::typesys::Elem::Tuple(t)) if t == name)
            }) {
                return Err(Error::TypeInUse { ty: name.into(), reason: format!("global {g} uses it") });
            }
            self.state.types.tuples.remove(name);
            self.schema_changed()?;
            return Ok(done(format!("tuple type {name} dropped")));
        }
        if name == OBJECT {
            return Err(Error::TypeInUse { ty: name.into(), reason: "it is the root type".into() });
        }
        self.state.types.class(name)?;
        if let Some(reason) = self.state.types.usage_of(name).or_else(|| self.global_refs(name)) {
            return Err(Error::TypeInUse { ty: name.into(), reason });
        }
        let members: BTreeSet<Oid> = self.state.oids.members(&self.state.types, name).into_iter().collect();
        self.state.destroy(&members)?;
        self.state.types.classes.remove(name);
        self.cache.clear();
        self.state.reconcile()?;
        rcompiler::check_realizations(&self.state)
            .map_err(|e| Error::TypeInUse { ty: name.to_string(), reason: e.to_string() })?;
        Ok(done(format!("class {name} dropped")))
    }

    fn global_key(&self, name: &str, vt: &ValueType, k: &KeyDecl) -> Result<KeySpec> {
        let attrs = self.state.types.value_attrs(name, vt)?;
        let fields: Vec<AttrName> = k.fields.iter().map(|p| AttrName::from_segments(p.clone())).collect();
        for f in &fields {
            if !attrs.iter().any(|a| a.name == *f) {
                return Err(Error::KeyFieldUnknown(f.to_string()));
            }
        }
        let target = match (&k.kind, &k.target) {
            (KeyKind::Foreign, Some(p)) => Some(self.state.types.foreign_target(p)?),
            (KeyKind::Foreign, None) => return Err(Error::ForeignKeyTargetNotGlobal(name.into())),
            _ => None,
        };
        Ok(KeySpec { kind: k.kind, fields, target })
    }

    fn create_global(&mut self, name: &str, ty: &lang::TypeExpr, keys: &[KeyDecl], realize: &GlobalRealize) -> Result<Output> {
        let types = &self.state.types;
        if self.state.globals.contains_key(name)
            || types.classes.contains_key(name)
            || types.tuples.contains_key(name)
            || crate::catalog::TABLES.contains(&name)
        {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let vt = types.value_type(ty)?;
        let keys = keys.iter().map(|k| self.global_key(name, &vt, k)).collect::<Result<Vec<_>>>()?;
        let imp = match realize {
            GlobalRealize::Stored => {
                GlobalImpl::Stored(Relation::empty(analyze::value_scheme(&self.state, name, &vt)?))
            }
            GlobalRealize::Expr(e) => {
                let src = lang::pretty::expr(e);
                analyze::global(&self.state, name, &vt, &src)?;
                GlobalImpl::Computed(src)
            }
        };
        self.state.globals.insert(name.to_string(), GlobalVar { ty: vt, keys, imp });
        self.cache.clear();
        Ok(done(format!("global {name} created")))
    }

    fn run_destructors(&mut self, oids: &BTreeSet<Oid>) -> Result<()> {
        let mut by_type: BTreeMap<String, BTreeSet<Oid>> = BTreeMap::new();
        for &o in oids {
            by_type.entry(self.state.oids.type_of(o)?.to_string()).or_default().insert(o);
        }
        for (ty, group) in by_type {
            for d in self.state.types.destructors(&ty)? {
                let got = d.params.as_ref().map_or(0, Vec::len);
                if got != 0 {
                    return Err(Error::ArityMismatch { method: d.name, expected: got, got: 0 });
                }
                let args: BTreeMap<Oid, Vec<Value>> = group.iter().map(|&o| (o, Vec::new())).collect();
                rcompiler::invoke(self, &ty, &d.name, &group, &args)?;
            }
        }
        Ok(())
    }

    fn new_object(&mut self, ty: &str, args: &[Expr]) -> Result<Output> {
        if ty == OBJECT {
            return Err(Error::Unsupported("the root type has no instances of its own".into()));
        }
        self.state.types.class(ty)?;
        self.state.types.check_fully_realized(ty)?;
        let ctor = self.state.types.constructor(ty);
        let expected = ctor.as_ref().and_then(|c| c.params.as_ref()).map_or(0, Vec::len);
        if expected != args.len() {
            return Err(Error::CtorArityMismatch { ty: ty.into(), expected, got: args.len() });
        }
        let mut vals = Vec::new();
        for a in args {
            let s = analyze::Env::top(&self.state).scalar(a)?;
            vals.push(interp::scalar(self, &interp::Frame::top(), &s)?);
        }
        let o = self.state.oids.issue(ty);
        self.state.add_object_rows(o)?;
        if ctor.is_some() {
            let targets: BTreeSet<Oid> = [o].into();
            let args: BTreeMap<Oid, Vec<Value>> = [(o, vals)].into();
            rcompiler::invoke(self, ty, ty, &targets, &args)?;
        }
        Ok(Output::Created(o))
    }

    // ------------------------------------------------------------ integrity

    /// Rows of `ty.comp` for every object whose type realizes the component.
    fn realized_rows(&mut self, ty: &str, comp: &str) -> Result<Relation> {
        let st = &self.state;
        let oids: BTreeSet<Oid> = st
            .oids
            .members(&st.types, ty)
            .into_iter()
            .filter(|o| st.oids.type_of(*o).is_ok_and(|t| matches!(st.types.realization(t, comp), Ok(Some(_)))))
            .collect();
        rvars::component_rows(self, ty, comp, &oids)
    }

    /// Scalar attributes `fields` of every `ty` object, joined on OID.
    fn scalar_rows(&mut self, ty: &str, fields: &[AttrName]) -> Result<Relation> {
        let mut acc: Option<Relation> = None;
        for f in fields {
            let rows = self.realized_rows(ty, &f.to_string())?;
            acc = Some(match acc {
                None => rows,
                Some(a) => a.join_on(&rows, &[(AttrName::oid(), AttrName::oid())])?,
            });
        }
        acc.ok_or_else(|| Error::KeyFieldUnknown("empty key".into()))
    }

    fn foreign_values(&mut self, k: &KeySpec) -> Result<BTreeSet<Tuple>> {
        let t = k.target.as_ref().ok_or_else(|| Error::ForeignKeyTargetNotGlobal(k.to_string()))?;
        let rows = match &t.component {
            Some(c) => self.realized_rows(&t.ty, c)?,
            None => self.scalar_rows(&t.ty, &t.fields)?,
        };
        let idx: Vec<usize> = t.fields.iter().map(|f| rows.scheme().require(f)).collect::<Result<_>>()?;
        Ok(rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect())
    }

    fn check_key(&mut self, place: &str, rows: &Relation, k: &KeySpec) -> Result<()> {
        let fields = match k.kind {
            KeyKind::Local if rows.scheme().has_oid() && !k.fields.contains(&AttrName::oid()) => {
                let mut f = vec![AttrName::oid()];
                f.extend(k.fields.iter().cloned());
                f
            }
            _ => k.fields.clone(),
        };
        let idx: Vec<usize> = fields.iter().map(|f| rows.scheme().require(f)).collect::<Result<_>>()?;
        let key_of = |r: &Tuple| -> Tuple { idx.iter().map(|&i| r[i].clone()).collect() };
        let shown = |t: &Tuple| t.iter().map(Value::to_string).collect::<Vec<_>>().join(", ");
        if k.kind == KeyKind::Foreign {
            let allowed = self.foreign_values(k)?;
            for r in rows.iter() {
                let key = key_of(r);
                if key.iter().all(|v| !v.is_undefined()) && !allowed.contains(&key) {
                    return Err(Error::KeyViolation(format!("{place}: ({}) has no match for {k}", shown(&key))));
                }
            }
            return Ok(());
        }
        let mut seen = BTreeSet::new();
        for r in rows.iter() {
            let key = key_of(r);
            if key.iter().any(Value::is_undefined) {
                return Err(Error::KeyViolation(format!("{place}: undefined value in {k}")));
            }
            if !seen.insert(key.clone()) {
                return Err(Error::KeyViolation(format!("{place}: duplicate ({}) for {k}", shown(&key))));
            }
        }
        Ok(())
    }

    /// Checks every declared key and every reference.
    pub fn enforce(&mut self) -> Result<()> {
        let classes: Vec<_> = self.state.types.classes.values().filter(|c| c.name != OBJECT).cloned().collect();
        for c in &classes {
            for s in c.components.iter().filter(|s| s.is_attribute() && !s.keys.is_empty()) {
                let rows = self.realized_rows(&c.name, &s.name)?;
                for k in &s.keys {
                    self.check_key(&format!("{}.{}", c.name, s.name), &rows, k)?;
                }
            }
            for k in &c.keys {
                let rows = self.scalar_rows(&c.name, &k.fields)?;
                self.check_key(&c.name, &rows, k)?;
            }
        }
        let globals: Vec<(String, GlobalVar)> =
            self.state.globals.iter().filter(|(_, g)| !g.keys.is_empty()).map(|(n, g)| (n.clone(), g.clone())).collect();
        for (n, g) in globals {
            if let GlobalImpl::Stored(r) = &g.imp {
                for k in &g.keys {
                    self.check_key(&n, r, k)?;
                }
            }
        }
        self.state.check_references()
    }

    // ------------------------------------------------------------ display

    /// The user-facing form of a reference: the type and its global key
    /// value when it has one, `Object` otherwise.
    pub fn display_oid(&self, o: Oid) -> String {
        display_oid(&self.state, o)
    }

    /// Renders an output for the terminal.
    pub fn render(&self, out: &Output) -> String {
        match out {
            Output::Done(m) => m.clone(),
            Output::Created(o) => format!("created {}", self.display_oid(*o)),
            Output::Table(r) => render_table(&self.state, r),
        }
    }

    /// Schemes of the type and component R-variables of `ty` with their keys.
    pub fn describe(&self, ty: &str) -> Result<String> {
        let st = &self.state;
        let def = st.types.class(ty)?;
        let mut s = String::new();
        let cols = |sch: &crate::relalg::Scheme| {
            sch.attrs.iter().map(|a| format!("{} {}", a.name, a.ty)).collect::<Vec<_>>().join(", ")
        };
        let _ = writeln!(s, "{ty} ({})", cols(&rvars::type_scheme(st, ty)?));
        if def.parents.iter().any(|p| p != OBJECT) {
            let _ = writeln!(s, "  extends {}", def.parents.join(", "));
        }
        for c in st.types.effective_components(ty)? {
            let name = &c.spec.name;
            let real = match st.types.realization(ty, name) {
                Ok(Some((r, Impl::Stored))) => format!("stored in {r}"),
                Ok(Some((r, Impl::Computed(_)))) => format!("computed by {r}"),
                Ok(Some((r, Impl::Method(_)))) => format!("realized by {r}"),
                Ok(None) => "unrealized".to_string(),
                Err(e) => e.to_string(),
            };
            if c.spec.is_method() {
                let ps = c.spec.params.iter().flatten().map(|(n, t)| format!("{n} {t}")).collect::<Vec<_>>();
                let res = c.spec.ty.as_ref().map(|t| format!(" {t}")).unwrap_or_default();
                let _ = writeln!(s, "  {name}({}){res}  [{real}]", ps.join(", "));
                continue;
            }
            let key = rvars::derive_rvar_key(st, ty, name)?;
            let fields: Vec<String> = key.fields.iter().map(|f| f.to_string()).collect();
            let _ = writeln!(
                s,
                "  {ty}.{name} ({})  key {{{}}}  [{real}]",
                cols(&rvars::component_scheme(st, ty, name)?),
                fields.join(", ")
            );
        }
        for k in &def.keys {
            let _ = writeln!(s, "  CONSTRAIN {k}");
        }
        Ok(s)
    }
}

fn plural(n: usize, what: &str) -> String {
    if n == 1 {
        format!("1 {what}")
    } else {
        format!("{n} {what}s")
    }
}

fn key_value(st: &State, ty: &str, o: Oid) -> Option<Value> {
    let comps = st.types.effective_components(ty).ok()?;
    let keyed = comps.iter().find(|c| {
        matches!(c.spec.ty, Some(ValueType::Scalar(_)))
            && c.spec.keys.iter().any(|k| k.kind == KeyKind::Global && k.fields == [AttrName::new(c.spec.name.as_str())])
    });
    let comp = match keyed {
        Some(c) => c.clone(),
        None => {
            let lin = st.types.linearize(ty).ok()?;
            let field = lin.iter().find_map(|t| {
                st.types.class(t).ok()?.keys.iter().find(|k| k.kind == KeyKind::Global && k.fields.len() == 1).map(|k| {
                    k.fields[0].to_string()
                })
            })?;
            comps.into_iter().find(|c| c.spec.name == field)?
        }
    };
    if !matches!(st.types.realization(ty, &comp.spec.name), Ok(Some((_, Impl::Stored)))) {
        return None;
    }
    let rows = st.read(&comp.owner, &comp.spec.name, &[o].into()).ok()?;
    let v = rows.iter().next().map(|t| t[1].clone());
    v.filter(|v| !v.is_undefined())
}

/// The user-facing form of a reference.
pub fn display_oid(st: &State, o: Oid) -> String {
    let Ok(ty) = st.oids.type_of(o) else { return "Object".into() };
    match key_value(st, ty, o) {
        Some(v) => format!("{ty} {v}"),
        None => "Object".into(),
    }
}

fn cell(st: &State, v: &Value) -> String {
    match v {
        Value::Oid(o) => display_oid(st, *o),
        other => other.to_string(),
    }
}

/// An aligned text table with rows in canonical order.
pub fn render_table(st: &State, r: &Relation) -> String {
    let heads: Vec<String> = r.scheme().names().map(|n| n.to_string()).collect();
    let rows: Vec<Vec<String>> = r.iter().map(|t| t.iter().map(|v| cell(st, v)).collect()).collect();
    let mut widths: Vec<usize> = heads.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&heads));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for row in &rows {
        let _ = writeln!(out, "{}", line(row));
    }
    let _ = write!(out, "({})", plural(rows.len(), "row"));
    out
}
