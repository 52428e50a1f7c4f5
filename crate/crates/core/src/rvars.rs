//! Representation level: component, type and reference R-variables, group
//! references, OV-retrieval and reference expansion.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::rcompiler;
use crate::relalg::{Attr, AttrName, KeyKind, KeySpec, Oid, Relation, RowExpr, ScalarType, Scheme, Tuple, Value};
use crate::storage::{Database, State};
use crate::typesys::{Impl, ValueType};

fn oid_attr(ty: &str) -> Attr {
    Attr::new(AttrName::oid(), ScalarType::Ref(ty.to_string()))
}

/// A group reference: the unary relation `(OID)` over `oids`.
pub fn group(ty: &str, oids: impl IntoIterator<Item = Oid>) -> Relation {
    let scheme = Scheme::new(vec![oid_attr(ty)]).expect("single attribute");
    Relation::from_tuples(scheme, oids.into_iter().map(|o| vec![Value::Oid(o)])).expect("OIDs conform")
}

/// Defined OIDs found in column `name`.
pub fn oids_in(rel: &Relation, name: &AttrName) -> Result<BTreeSet<Oid>> {
    let i = rel.scheme().require(name)?;
    Ok(rel.iter().filter_map(|t| t[i].as_oid()).collect())
}

/// The key of the R-variable `ty.comp`: the fields of a global key, a local
/// key's fields plus OID, or OID alone.
pub fn derive_rvar_key(state: &State, ty: &str, comp: &str) -> Result<KeySpec> {
    let spec = state.types.component(ty, comp)?.spec;
    if spec.is_method() {
        return Err(Error::Unsupported(format!("method {comp} has no R-variable")));
    }
    if let Some(k) = spec.keys.iter().find(|k| k.kind == KeyKind::Global) {
        return Ok(KeySpec::new(KeyKind::Global, k.fields.clone()));
    }
    if let Some(k) = spec.keys.iter().find(|k| k.kind == KeyKind::Local) {
        let mut fields = vec![AttrName::oid()];
        fields.extend(k.fields.iter().cloned());
        return Ok(KeySpec::new(KeyKind::Local, fields));
    }
    Ok(KeySpec::new(KeyKind::Local, vec![AttrName::oid()]))
}

/// Scheme `(OID, fields)` of the R-variable `ty.comp`, without keys.
pub fn component_scheme(state: &State, ty: &str, comp: &str) -> Result<Scheme> {
    let spec = state.types.component(ty, comp)?.spec;
    if spec.is_method() {
        return Err(Error::Unsupported(format!("method {comp} has no R-variable")));
    }
    let mut attrs = vec![oid_attr(ty)];
    attrs.extend(state.types.value_attrs(&spec.name, spec.value_type()?)?);
    Scheme::new(attrs)
}

/// Attribute components of `ty` in effective order.
pub fn attributes(state: &State, ty: &str) -> Result<Vec<(String, ValueType)>> {
    Ok(state
        .types
        .effective_components(ty)?
        .into_iter()
        .filter(|c| c.spec.is_attribute())
        .filter_map(|c| c.spec.ty.map(|t| (c.spec.name, t)))
        .collect())
}

/// Scheme of the type R-variable: OID, scalar components, then refined
/// `component.field` names for tuple and set components.
pub fn type_scheme(state: &State, ty: &str) -> Result<Scheme> {
    let mut attrs = vec![oid_attr(ty)];
    for (name, vt) in attributes(state, ty)? {
        let fields = state.types.value_attrs(&name, &vt)?;
        if vt.is_scalar() {
            attrs.extend(fields);
        } else {
            let prefix = AttrName::new(name.as_str());
            attrs.extend(fields.into_iter().map(|a| Attr::new(a.name.refined(&prefix), a.ty)));
        }
    }
    Scheme::new(attrs)
}

/// Rows of component `comp` for the objects `oids` (all of which are `ty`
/// objects), each object read through its own realization.
pub fn component_rows(db: &mut Database, ty: &str, comp: &str, oids: &BTreeSet<Oid>) -> Result<Relation> {
    let scheme = component_scheme(&db.state, ty, comp)?;
    let owner = db.state.types.component(ty, comp)?.owner;
    let mut parts: BTreeMap<(String, bool), BTreeSet<Oid>> = BTreeMap::new();
    let mut by_type: BTreeMap<String, (String, bool)> = BTreeMap::new();
    for o in oids {
        let t = db.state.oids.type_of(*o)?.to_string();
        if !db.state.types.is_subtype(&t, ty) {
            return Err(Error::TypeMismatch(format!("{o} is not a {ty}")));
        }
        let key = match by_type.get(&t) {
            Some(k) => k.clone(),
            None => {
                let (realizer, imp) = db.state.types.require_realization(&t, comp)?;
                let k = (realizer, imp == Impl::Stored);
                by_type.insert(t, k.clone());
                k
            }
        };
        parts.entry(key).or_default().insert(*o);
    }
    let mut out = Relation::empty(scheme.clone());
    for ((realizer, stored), part) in parts {
        let rows = if stored {
            db.state.read(&owner, comp, &part)?
        } else {
            rcompiler::eval_computed(db, &realizer, comp, &part)?
        };
        out = out.union(&rows.reorder_to(&scheme)?)?;
    }
    Ok(out)
}

/// The R-variable `ty.comp` over every live object of `ty`.
pub fn component_rvar(db: &mut Database, ty: &str, comp: &str) -> Result<Relation> {
    let oids: BTreeSet<Oid> = db.state.oids.members(&db.state.types, ty).into_iter().collect();
    component_rows(db, ty, comp, &oids)
}

/// Rows of the type R-variable for `oids`. An object with an empty set
/// component contributes one row with that component's fields undefined.
pub fn type_rows(db: &mut Database, ty: &str, oids: &BTreeSet<Oid>) -> Result<Relation> {
    let mut acc = group(ty, oids.iter().copied());
    for (name, vt) in attributes(&db.state, ty)? {
        let rows = component_rows(db, ty, &name, oids)?;
        let rows = if vt.is_scalar() {
            rows
        } else {
            let prefix = AttrName::new(name.as_str());
            let renames: Vec<(AttrName, AttrName)> =
                rows.scheme().names().skip(1).map(|n| (n.clone(), n.refined(&prefix))).collect();
            let mut rows = rows.rename(&renames)?;
            let present = oids_in(&rows, &AttrName::oid())?;
            for o in oids.difference(&present) {
                let mut pad: Tuple = vec![Value::Oid(*o)];
                pad.resize(rows.scheme().len(), Value::Undefined);
                rows.insert(pad)?;
            }
            rows
        };
        acc = acc.join_on(&rows, &[(AttrName::oid(), AttrName::oid())])?;
    }
    Ok(acc)
}

/// The R-variable of type `ty` over every live object of it.
pub fn type_rvar(db: &mut Database, ty: &str) -> Result<Relation> {
    let oids: BTreeSet<Oid> = db.state.oids.members(&db.state.types, ty).into_iter().collect();
    type_rows(db, ty, &oids)
}

/// `Object(rel)`: the group of objects named by the OID attribute.
pub fn object_of(rel: &Relation) -> Result<Relation> {
    if !rel.scheme().has_oid() {
        return Err(Error::NoOidAttribute);
    }
    rel.project(&[AttrName::oid()])
}

/// `ref.a` (or `ref` alone): the R-variable of the target type restricted to the group.
pub fn ref_rvar(db: &mut Database, ty: &str, group: &Relation, suffix: Option<&str>) -> Result<Relation> {
    let oids = oids_in(group, &AttrName::oid())?;
    match suffix {
        Some(c) => component_rows(db, ty, c, &oids),
        None => type_rows(db, ty, &oids),
    }
}

/// Objects having, for each condition independently, at least one row
/// satisfying it, together with all their rows.
pub fn ov_retrieval(rel: &Relation, conds: &[RowExpr]) -> Result<Relation> {
    let mut g = object_of(rel)?;
    for c in conds {
        g = g.intersect(&object_of(&rel.select_where(c)?)?)?;
    }
    rel.semijoin(&g, &[(AttrName::oid(), AttrName::oid())])
}

/// Joins `rel` with the type R-variable of the type `attr` refers to, with
/// target attributes refined by `attr`. Undefined references drop out.
pub fn expand_ref(db: &mut Database, rel: &Relation, attr: &AttrName) -> Result<Relation> {
    let a = rel.scheme().attr(attr).ok_or_else(|| Error::UnknownAttribute(attr.to_string()))?;
    let ScalarType::Ref(target) = a.ty.clone() else {
        return Err(Error::NotARefAttribute(attr.to_string()));
    };
    let oids = oids_in(rel, attr)?;
    let rows = type_rows(db, &target, &oids)?;
    expand_with(rel, attr, &rows)
}

/// The expansion join against already materialized target rows.
pub fn expand_with(rel: &Relation, attr: &AttrName, target_rows: &Relation) -> Result<Relation> {
    let renames: Vec<(AttrName, AttrName)> =
        target_rows.scheme().names().filter(|n| !n.is_oid()).map(|n| (n.clone(), n.refined(attr))).collect();
    let renamed = target_rows.rename(&renames)?;
    rel.join_on(&renamed, &[(attr.clone(), AttrName::oid())])
}
