//! Storage level: base variables keyed by OID, integrity checks and object lifecycle.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::OidTable;
use crate::error::{Error, Result};
use crate::relalg::{Attr, AttrName, KeySpec, Oid, Relation, ScalarType, Scheme, Tuple, Value};
use crate::rcompiler::Cache;
use crate::typesys::{Impl, TypeRegistry, ValueType, OBJECT};

/// Component slot of the own-tuple base variable of a type.
pub const OWN: &str = "#own";

/// Evaluation strategy for computed components and method invocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Set-at-a-time execution over whole groups.
    #[default]
    Compiled,
    /// Object-by-object interpretation in ascending OID order.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GlobalImpl {
    Stored(Relation),
    /// Canonical source of the defining expression.
    Computed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalVar {
    pub ty: ValueType,
    pub keys: Vec<KeySpec>,
    pub imp: GlobalImpl,
}

pub type VarId = (String, String);

/// Everything that persists and that a transaction restores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub types: TypeRegistry,
    pub oids: OidTable,
    pub base: BTreeMap<VarId, Relation>,
    pub globals: BTreeMap<String, GlobalVar>,
}

#[derive(Debug, Default)]
pub struct Database {
    pub state: State,
    pub mode: Mode,
    pub(crate) warnings: Vec<String>,
    pub(crate) tx: Option<State>,
    /// A command of the open transaction failed; it can only be rolled back.
    pub(crate) tx_failed: bool,
    pub(crate) cache: Cache,
    pub(crate) depth: usize,
    pub(crate) computing: Vec<(String, String)>,
}

impl Clone for Database {
    fn clone(&self) -> Self {
        Database { state: self.state.clone(), mode: self.mode, ..Database::default() }
    }
}

fn oid_attr(ty: &str) -> Attr {
    Attr::new(AttrName::oid(), ScalarType::Ref(ty.to_string()))
}

impl State {
    /// Own (non-inherited) scalar attributes of `ty`.
    pub fn own_scalars(&self, ty: &str) -> Vec<(String, ScalarType)> {
        let Ok(c) = self.types.class(ty) else { return Vec::new() };
        c.components
            .iter()
            .filter(|s| s.is_attribute())
            .filter_map(|s| match &s.ty {
                Some(ValueType::Scalar(t)) => Some((s.name.clone(), t.clone())),
                _ => None,
            })
            .collect()
    }

    /// Scheme of a base variable: OID followed by the component's row attributes.
    pub fn var_scheme(&self, id: &VarId) -> Result<Scheme> {
        let mut attrs = vec![oid_attr(&id.0)];
        if id.1 == OWN {
            attrs.extend(self.own_scalars(&id.0).into_iter().map(|(n, t)| Attr::new(n.as_str(), t)));
        } else {
            let spec = self.types.component(&id.0, &id.1)?.spec;
            attrs.extend(self.types.value_attrs(&spec.name, spec.value_type()?)?);
        }
        Scheme::new(attrs)
    }

    fn expected_vars(&self) -> Result<BTreeMap<VarId, Scheme>> {
        let mut out = BTreeMap::new();
        for c in self.types.classes.values().filter(|c| c.name != OBJECT) {
            let mut ids = Vec::new();
            if !self.own_scalars(&c.name).is_empty() {
                ids.push((c.name.clone(), OWN.to_string()));
            }
            for s in c.components.iter().filter(|s| s.is_attribute()) {
                if !matches!(s.ty, Some(ValueType::Scalar(_))) {
                    ids.push((c.name.clone(), s.name.clone()));
                }
            }
            for id in ids {
                let sch = self.var_scheme(&id)?;
                out.insert(id, sch);
            }
        }
        Ok(out)
    }

    /// Realization of `comp` for the type of object `o` is `Stored`.
    fn stored_for(&self, o: Oid, comp: &str) -> bool {
        let Ok(ty) = self.oids.type_of(o) else { return false };
        matches!(self.types.realization(ty, comp), Ok(Some((_, Impl::Stored))))
    }

    /// Brings base variables in line with the current schema: creates and drops
    /// variables, adapts columns, adds own-tuple rows for live objects and
    /// clears data of components that are no longer stored.
    pub fn reconcile(&mut self) -> Result<()> {
        let expected = self.expected_vars()?;
        self.base.retain(|id, _| expected.contains_key(id));
        for (id, scheme) in expected {
            let old = self.base.remove(&id).unwrap_or_else(|| Relation::empty(scheme.clone()));
            let cols: Vec<Option<usize>> = scheme
                .attrs
                .iter()
                .map(|a| old.scheme().index_of(&a.name).filter(|&i| old.scheme().attrs[i].ty == a.ty))
                .collect();
            let mut rows: BTreeSet<Tuple> = BTreeSet::new();
            for t in old.iter() {
                let Some(o) = t[0].as_oid() else { continue };
                if !self.oids.contains(o) {
                    continue;
                }
                if id.1 != OWN && !self.stored_for(o, &id.1) {
                    continue;
                }
                let mut row: Tuple = cols.iter().map(|c| c.map_or(Value::Undefined, |i| t[i].clone())).collect();
                if id.1 == OWN {
                    for (k, a) in scheme.attrs.iter().enumerate().skip(1) {
                        if !self.stored_for(o, &a.name.to_string()) {
                            row[k] = Value::Undefined;
                        }
                    }
                }
                rows.insert(row);
            }
            if id.1 == OWN {
                let present: BTreeSet<Oid> = rows.iter().filter_map(|t| t[0].as_oid()).collect();
                for o in self.oids.members(&self.types, &id.0) {
                    if !present.contains(&o) {
                        let mut row = vec![Value::Oid(o)];
                        row.resize(scheme.len(), Value::Undefined);
                        rows.insert(row);
                    }
                }
            }
            self.base.insert(id, Relation::from_tuples(scheme, rows)?);
        }
        Ok(())
    }

    /// Adds the own-tuple rows of a freshly created object.
    pub fn add_object_rows(&mut self, o: Oid) -> Result<()> {
        let ty = self.oids.type_of(o)?.to_string();
        for t in self.types.linearize(&ty)? {
            let id = (t.clone(), OWN.to_string());
            if let Some(r) = self.base.get_mut(&id) {
                let mut row = vec![Value::Oid(o)];
                row.resize(r.scheme().len(), Value::Undefined);
                r.insert(row)?;
            }
        }
        Ok(())
    }

    /// Stored rows `(OID, fields)` of component `comp` declared by `owner`, for `oids`.
    pub fn read(&self, owner: &str, comp: &str, oids: &BTreeSet<Oid>) -> Result<Relation> {
        let spec = self.types.component(owner, comp)?.spec;
        let vt = spec.value_type()?.clone();
        let (id, keep) = if vt.is_scalar() {
            ((owner.to_string(), OWN.to_string()), Some(vec![AttrName::oid(), AttrName::new(comp)]))
        } else {
            ((owner.to_string(), comp.to_string()), None)
        };
        let var = self.base.get(&id).ok_or_else(|| Error::eval(format!("missing base variable {}.{}", id.0, id.1)))?;
        let mut rows: BTreeSet<Tuple> =
            var.iter().filter(|t| t[0].as_oid().is_some_and(|o| oids.contains(&o))).cloned().collect();
        let scheme = var.scheme().clone();
        if matches!(vt, ValueType::Tuple(_)) {
            let present: BTreeSet<Oid> = rows.iter().filter_map(|t| t[0].as_oid()).collect();
            for o in oids.difference(&present) {
                let mut row = vec![Value::Oid(*o)];
                row.resize(scheme.len(), Value::Undefined);
                rows.insert(row);
            }
        }
        let r = Relation::from_tuples(scheme.without_keys(), rows)?;
        match keep {
            Some(k) => r.project(&k),
            None => Ok(r),
        }
    }

    /// Replaces the stored rows of `oids` with `rows` (scheme `(OID, fields)`).
    pub fn write(&mut self, owner: &str, comp: &str, oids: &BTreeSet<Oid>, rows: &Relation) -> Result<()> {
        let spec = self.types.component(owner, comp)?.spec;
        let vt = spec.value_type()?.clone();
        let mut by_oid: BTreeMap<Oid, Vec<&Tuple>> = BTreeMap::new();
        for t in rows.iter() {
            let o = t[0].as_oid().ok_or_else(|| Error::eval("row without object identifier"))?;
            if !oids.contains(&o) {
                return Err(Error::eval(format!("row for {o} outside the written group")));
            }
            by_oid.entry(o).or_default().push(t);
        }
        if vt.is_single_row() {
            if let Some((o, _)) = by_oid.iter().find(|(_, v)| v.len() > 1) {
                return Err(Error::KeyViolation(format!("{owner}.{comp} of {o} has more than one value")));
            }
        }
        if vt.is_scalar() {
            let id = (owner.to_string(), OWN.to_string());
            let var = self.base.get(&id).ok_or_else(|| Error::eval(format!("missing base variable {owner}")))?;
            let col = var.scheme().require(&AttrName::new(comp))?;
            let mut out = BTreeSet::new();
            for t in var.iter() {
                let mut t = t.clone();
                if let Some(o) = t[0].as_oid().filter(|o| oids.contains(o)) {
                    t[col] = by_oid.get(&o).map_or(Value::Undefined, |v| v[0][1].clone());
                }
                out.insert(t);
            }
            let scheme = var.scheme().clone();
            self.base.insert(id, Relation::from_tuples(scheme, out)?);
        } else {
            let id = (owner.to_string(), comp.to_string());
            let var = self.base.get(&id).ok_or_else(|| Error::eval(format!("missing base variable {owner}.{comp}")))?;
            let scheme = var.scheme().clone();
            let aligned = rows.reorder_to(&scheme.without_keys())?;
            let mut out: BTreeSet<Tuple> =
                var.iter().filter(|t| !t[0].as_oid().is_some_and(|o| oids.contains(&o))).cloned().collect();
            out.extend(aligned.into_tuples());
            self.base.insert(id, Relation::from_tuples(scheme, out)?);
        }
        Ok(())
    }

    fn ref_columns(r: &Relation, skip_first: bool) -> Vec<(usize, String)> {
        r.scheme()
            .attrs
            .iter()
            .enumerate()
            .skip(usize::from(skip_first))
            .filter_map(|(i, a)| match &a.ty {
                ScalarType::Ref(t) => Some((i, t.clone())),
                _ => None,
            })
            .collect()
    }

    fn check_ref(&self, v: &Value, target: &str, place: &str) -> Result<()> {
        let Some(o) = v.as_oid() else { return Ok(()) };
        let ok = self.oids.type_of(o).is_ok_and(|t| self.types.is_subtype(t, target));
        if ok {
            Ok(())
        } else {
            Err(Error::RefIntegrityViolation(format!("{place} holds {o}, which is not a live {target}")))
        }
    }

    /// Every defined reference names a live object of the declared type, and
    /// every base-variable row belongs to a live object.
    pub fn check_references(&self) -> Result<()> {
        for ((ty, comp), r) in &self.base {
            let cols = Self::ref_columns(r, true);
            for t in r.iter() {
                let o = t[0].as_oid().ok_or_else(|| Error::RefIntegrityViolation(format!("{ty}.{comp} row without OID")))?;
                if !self.oids.contains(o) {
                    return Err(Error::RefIntegrityViolation(format!("{ty}.{comp} has a row for dead object {o}")));
                }
                for (i, target) in &cols {
                    self.check_ref(&t[*i], target, &format!("{ty}.{comp}"))?;
                }
            }
        }
        for (name, g) in &self.globals {
            if let GlobalImpl::Stored(r) = &g.imp {
                let cols = Self::ref_columns(r, false);
                for t in r.iter() {
                    for (i, target) in &cols {
                        self.check_ref(&t[*i], target, name)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// References to members of `group` held outside it.
    pub fn outside_references(&self, group: &BTreeSet<Oid>) -> Vec<String> {
        let mut out = Vec::new();
        for ((ty, comp), r) in &self.base {
            let cols = Self::ref_columns(r, true);
            for t in r.iter() {
                if t[0].as_oid().is_some_and(|o| group.contains(&o)) {
                    continue;
                }
                for (i, _) in &cols {
                    if let Some(o) = t[*i].as_oid().filter(|o| group.contains(o)) {
                        out.push(format!("{o} from {ty}.{comp} of {}", t[0]));
                    }
                }
            }
        }
        for (name, g) in &self.globals {
            if let GlobalImpl::Stored(r) = &g.imp {
                for t in r.iter() {
                    for v in t {
                        if let Some(o) = v.as_oid().filter(|o| group.contains(o)) {
                            out.push(format!("{o} from global {name}"));
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Removes the objects of `group` and all their rows, unless something
    /// outside the group still refers to one of them.
    pub fn destroy(&mut self, group: &BTreeSet<Oid>) -> Result<()> {
        for o in group {
            self.oids.type_of(*o)?;
        }
        let refs = self.outside_references(group);
        if !refs.is_empty() {
            return Err(Error::ReferentialVeto(refs.join("; ")));
        }
        for r in self.base.values_mut() {
            let keep: BTreeSet<Tuple> =
                r.iter().filter(|t| !t[0].as_oid().is_some_and(|o| group.contains(&o))).cloned().collect();
            *r = Relation::from_tuples(r.scheme().clone(), keep)?;
        }
        for o in group {
            self.oids.rows.remove(o);
        }
        Ok(())
    }
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    /// Diagnostics produced since the last call.
    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }

    /// Diagnostics of the last executed command.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub(crate) fn warn(&mut self, msg: String) {
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    pub fn in_transaction(&self) -> bool {
        self.tx.is_some()
    }
}
