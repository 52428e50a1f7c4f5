//! Value types, object types and the inheritance structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{ComponentDecl, KeyDecl, TypeExpr};
use crate::relalg::{Attr, AttrName, ForeignTarget, KeyKind, KeySpec, ScalarType};

pub const OBJECT: &str = "Object";

/// Attribute name of the rows of a set of scalars.
pub const VALUE_ATTR: &str = "value";

/// Element of a set-valued component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Elem {
    Scalar(ScalarType),
    Tuple(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueType {
    Scalar(ScalarType),
    Tuple(String),
    Set(Elem),
}

impl ValueType {
    pub fn is_scalar(&self) -> bool {
        matches!(self, ValueType::Scalar(_))
    }

    /// Scalar and tuple components hold exactly one row per object.
    pub fn is_single_row(&self) -> bool {
        !matches!(self, ValueType::Set(_))
    }

    fn refs(&self) -> Option<&str> {
        match self {
            ValueType::Scalar(ScalarType::Ref(t)) | ValueType::Set(Elem::Scalar(ScalarType::Ref(t))) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Scalar(t) => write!(f, "{t}"),
            ValueType::Tuple(n) => f.write_str(n),
            ValueType::Set(Elem::Scalar(t)) => write!(f, "SET OF {t}"),
            ValueType::Set(Elem::Tuple(n)) => write!(f, "SET OF {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleTypeDef {
    pub name: String,
    pub attrs: Vec<(String, ScalarType)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    /// `None` only for constructors.
    pub ty: Option<ValueType>,
    /// `Some` for methods, including ones with an empty parameter list.
    pub params: Option<Vec<(String, ScalarType)>>,
    pub keys: Vec<KeySpec>,
}

impl ComponentSpec {
    pub fn is_method(&self) -> bool {
        self.params.is_some()
    }

    pub fn is_attribute(&self) -> bool {
        self.params.is_none()
    }

    pub fn value_type(&self) -> Result<&ValueType> {
        self.ty.as_ref().ok_or_else(|| Error::ExprTypeError(format!("{} has no value type", self.name)))
    }
}

/// How a component is realized for one type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Impl {
    Stored,
    /// Canonical source of the defining expression.
    Computed(String),
    /// Canonical source of the `BEGIN ... END` body.
    Method(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    pub parents: Vec<String>,
    pub components: Vec<ComponentSpec>,
    /// Keys declared after the class body, over scalar components.
    pub keys: Vec<KeySpec>,
    pub impls: BTreeMap<String, Impl>,
}

impl TypeDef {
    pub fn own(&self, name: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// A component as seen from a type, together with its declaring type.
#[derive(Debug, Clone, PartialEq)]
pub struct EffComponent {
    pub spec: ComponentSpec,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRegistry {
    pub tuples: BTreeMap<String, TupleTypeDef>,
    pub classes: BTreeMap<String, TypeDef>,
}

impl Default for TypeRegistry {
    fn default() -> Self {
        let mut classes = BTreeMap::new();
        classes.insert(
            OBJECT.to_string(),
            TypeDef {
                name: OBJECT.into(),
                parents: Vec::new(),
                components: Vec::new(),
                keys: Vec::new(),
                impls: BTreeMap::new(),
            },
        );
        TypeRegistry { tuples: BTreeMap::new(), classes }
    }
}

fn is_basic(name: &str) -> bool {
    ScalarType::basic(name).is_some()
}

impl TypeRegistry {
    pub fn class(&self, name: &str) -> Result<&TypeDef> {
        self.classes.get(name).ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub(crate) fn class_mut(&mut self, name: &str) -> Result<&mut TypeDef> {
        self.classes.get_mut(name).ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    pub fn tuple(&self, name: &str) -> Result<&TupleTypeDef> {
        self.tuples.get(name).ok_or_else(|| Error::UnknownType(name.to_string()))
    }

    fn name_taken(&self, name: &str) -> bool {
        is_basic(name) || self.tuples.contains_key(name) || self.classes.contains_key(name)
    }

    /// Scalar type named `name`. Unknown names are taken as references to an
    /// object type that may be declared later.
    pub fn scalar_named(&self, name: &str) -> Result<ScalarType> {
        if let Some(t) = ScalarType::basic(name) {
            return Ok(t);
        }
        if self.tuples.contains_key(name) {
            return Err(Error::UnknownScalarType(format!("{name} is a tuple type")));
        }
        Ok(ScalarType::Ref(name.to_string()))
    }

    pub fn value_type(&self, t: &TypeExpr) -> Result<ValueType> {
        Ok(match t {
            TypeExpr::Named(n) if self.tuples.contains_key(n) => ValueType::Tuple(n.clone()),
            TypeExpr::Named(n) => ValueType::Scalar(self.scalar_named(n)?),
            TypeExpr::SetOf(n) if self.tuples.contains_key(n) => ValueType::Set(Elem::Tuple(n.clone())),
            TypeExpr::SetOf(n) => ValueType::Set(Elem::Scalar(self.scalar_named(n)?)),
        })
    }

    /// Attributes of one row of a component value, without the OID column.
    pub fn value_attrs(&self, name: &str, ty: &ValueType) -> Result<Vec<Attr>> {
        Ok(match ty {
            ValueType::Scalar(t) => vec![Attr::new(name, t.clone())],
            ValueType::Set(Elem::Scalar(t)) => vec![Attr::new(VALUE_ATTR, t.clone())],
            ValueType::Tuple(n) | ValueType::Set(Elem::Tuple(n)) => {
                self.tuple(n)?.attrs.iter().map(|(a, t)| Attr::new(a.as_str(), t.clone())).collect()
            }
        })
    }

    pub fn define_tuple(&mut self, name: &str, attrs: &[(String, String)]) -> Result<()> {
        if self.name_taken(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if attrs.is_empty() {
            return Err(Error::ExprTypeError(format!("tuple type {name} has no attributes")));
        }
        let mut out: Vec<(String, ScalarType)> = Vec::new();
        for (a, t) in attrs {
            if out.iter().any(|(b, _)| b == a) {
                return Err(Error::DuplicateName(format!("{name}.{a}")));
            }
            if t == name {
                return Err(Error::UnknownScalarType(t.clone()));
            }
            out.push((a.clone(), self.scalar_named(t)?));
        }
        self.tuples.insert(name.to_string(), TupleTypeDef { name: name.to_string(), attrs: out });
        Ok(())
    }

    /// Types in declaration order: bases before descendants, each once.
    pub fn linearize(&self, ty: &str) -> Result<Vec<String>> {
        fn visit(reg: &TypeRegistry, t: &str, seen: &mut BTreeSet<String>, out: &mut Vec<String>) -> Result<()> {
            if !seen.insert(t.to_string()) {
                return Ok(());
            }
            for p in &reg.class(t)?.parents {
                visit(reg, p, seen, out)?;
            }
            out.push(t.to_string());
            Ok(())
        }
        let mut out = Vec::new();
        visit(self, ty, &mut BTreeSet::new(), &mut out)?;
        Ok(out)
    }

    /// Reflexive-transitive ancestors, including `Object`.
    pub fn ancestors(&self, ty: &str) -> Result<BTreeSet<String>> {
        Ok(self.linearize(ty)?.into_iter().collect())
    }

    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        sup == OBJECT || self.ancestors(sub).is_ok_and(|a| a.contains(sup))
    }

    pub fn descendants(&self, ty: &str) -> BTreeSet<String> {
        self.classes.keys().filter(|c| self.is_subtype(c, ty)).cloned().collect()
    }

    pub fn effective_components(&self, ty: &str) -> Result<Vec<EffComponent>> {
        let mut out = Vec::new();
        for t in self.linearize(ty)? {
            for c in &self.class(&t)?.components {
                out.push(EffComponent { spec: c.clone(), owner: t.clone() });
            }
        }
        Ok(out)
    }

    pub fn component(&self, ty: &str, name: &str) -> Result<EffComponent> {
        self.effective_components(ty)?
            .into_iter()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| Error::UnknownComponent { ty: ty.to_string(), component: name.to_string() })
    }

    /// The nearest explicit realization of `comp` as seen from `ty`.
    pub fn realization(&self, ty: &str, comp: &str) -> Result<Option<(String, Impl)>> {
        let owner = self.component(ty, comp)?.owner;
        let candidates: Vec<String> = self
            .linearize(ty)?
            .into_iter()
            .filter(|t| self.is_subtype(t, &owner))
            .filter(|t| self.classes[t].impls.contains_key(comp))
            .collect();
        let minimal: Vec<String> = candidates
            .iter()
            .filter(|c| !candidates.iter().any(|d| d != *c && self.is_subtype(d, c)))
            .cloned()
            .collect();
        match minimal.len() {
            0 => Ok(None),
            1 => {
                let imp = self.classes[&minimal[0]].impls[comp].clone();
                Ok(Some((minimal[0].clone(), imp)))
            }
            _ => Err(Error::AmbiguousRealization { ty: ty.into(), component: comp.into(), candidates: minimal }),
        }
    }

    pub fn require_realization(&self, ty: &str, comp: &str) -> Result<(String, Impl)> {
        self.realization(ty, comp)?
            .ok_or_else(|| Error::UnrealizedComponent { ty: ty.to_string(), component: comp.to_string() })
    }

    /// Every attribute and method of `ty` has a realization.
    pub fn check_fully_realized(&self, ty: &str) -> Result<()> {
        for c in self.effective_components(ty)? {
            self.require_realization(ty, &c.spec.name)?;
        }
        Ok(())
    }

    pub fn constructor(&self, ty: &str) -> Option<ComponentSpec> {
        self.classes.get(ty)?.own(ty).filter(|c| c.is_method()).cloned()
    }

    /// Destructors `~T` declared by `ty` and its ancestors, most specific first.
    pub fn destructors(&self, ty: &str) -> Result<Vec<ComponentSpec>> {
        let mut out = Vec::new();
        for t in self.linearize(ty)?.into_iter().rev() {
            if let Some(c) = self.class(&t)?.own(&format!("~{t}")).filter(|c| c.is_method()) {
                out.push(c.clone());
            }
        }
        Ok(out)
    }

    fn key_spec(&self, owner: &str, comp: Option<&ComponentSpec>, k: &KeyDecl) -> Result<KeySpec> {
        let fields: Vec<AttrName> = k.fields.iter().map(|p| AttrName::from_segments(p.clone())).collect();
        let allowed: Vec<AttrName> = match comp {
            Some(c) => {
                if c.is_method() {
                    return Err(Error::KeyFieldUnknown(format!("method {} cannot carry keys", c.name)));
                }
                let ty = c.value_type()?;
                if k.kind == KeyKind::Local && !matches!(ty, ValueType::Set(_)) {
                    return Err(Error::KeyFieldUnknown(format!("local key on non-set component {}", c.name)));
                }
                self.value_attrs(&c.name, ty)?.into_iter().map(|a| a.name).collect()
            }
            None => self
                .effective_components(owner)
                .unwrap_or_default()
                .into_iter()
                .filter(|c| matches!(c.spec.ty, Some(ValueType::Scalar(_))) && c.spec.is_attribute())
                .map(|c| AttrName::new(c.spec.name))
                .collect(),
        };
        for f in &fields {
            if !allowed.contains(f) {
                return Err(Error::KeyFieldUnknown(f.to_string()));
            }
        }
        if comp.is_none() && k.kind == KeyKind::Local {
            return Err(Error::KeyFieldUnknown("local key outside a set component".into()));
        }
        let target = match (&k.kind, &k.target) {
            (KeyKind::Foreign, Some(path)) => Some(self.foreign_target(path)?),
            _ => None,
        };
        Ok(KeySpec { kind: k.kind, fields, target })
    }

    pub(crate) fn foreign_target(&self, path: &[String]) -> Result<ForeignTarget> {
        let bad = || Error::ForeignKeyTargetNotGlobal(path.join("."));
        let ty = path.first().ok_or_else(bad)?;
        let class = self.class(ty)?;
        let (component, field) = match path.len() {
            2 => (None, path[1].clone()),
            3 => (Some(path[1].clone()), path[2].clone()),
            _ => return Err(bad()),
        };
        let fname = AttrName::new(field.clone());
        let is_global = |ks: &[KeySpec]| ks.iter().any(|k| k.kind == KeyKind::Global && k.fields == [fname.clone()]);
        let ok = match &component {
            None => {
                class.own(&field).is_some_and(|c| is_global(&c.keys))
                    || (class.own(&field).is_some() && is_global(&class.keys))
            }
            Some(c) => class.own(c).is_some_and(|c| is_global(&c.keys)),
        };
        if !ok {
            return Err(bad());
        }
        Ok(ForeignTarget { ty: ty.clone(), component, fields: vec![fname] })
    }

    pub fn component_spec(&self, owner: &str, d: &ComponentDecl) -> Result<ComponentSpec> {
        let ty = d.ty.as_ref().map(|t| self.value_type(t)).transpose()?;
        let params = match &d.params {
            None => None,
            Some(ps) => {
                let mut out: Vec<(String, ScalarType)> = Vec::new();
                for p in ps {
                    if out.iter().any(|(n, _)| *n == p.name) {
                        return Err(Error::DuplicateName(format!("parameter {}", p.name)));
                    }
                    match self.value_type(&p.ty)? {
                        ValueType::Scalar(t) => out.push((p.name.clone(), t)),
                        other => return Err(Error::ExprTypeError(format!("parameter {} of type {other}", p.name))),
                    }
                }
                Some(out)
            }
        };
        let lifecycle = d.name == owner || d.name.strip_prefix('~') == Some(owner);
        if d.name.starts_with('~') && !lifecycle {
            return Err(Error::ExprTypeError(format!("destructor {} must be named ~{owner}", d.name)));
        }
        if d.name.starts_with('~') && params.as_ref().is_none_or(|p| !p.is_empty()) {
            return Err(Error::ExprTypeError(format!("destructor {} takes no parameters", d.name)));
        }
        if ty.is_none() && !(params.is_some() && lifecycle) {
            return Err(Error::ExprTypeError(format!("component {} needs a value type", d.name)));
        }
        let mut spec = ComponentSpec { name: d.name.clone(), ty, params, keys: Vec::new() };
        let keys = d.keys.iter().map(|k| self.key_spec(owner, Some(&spec), k)).collect::<Result<_>>()?;
        spec.keys = keys;
        Ok(spec)
    }

    pub fn create_class(
        &mut self,
        name: &str,
        parents: &[String],
        components: &[ComponentDecl],
        keys: &[KeyDecl],
    ) -> Result<()> {
        if self.name_taken(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let parents: Vec<String> = if parents.is_empty() { vec![OBJECT.to_string()] } else { parents.to_vec() };
        for p in &parents {
            if !self.classes.contains_key(p) {
                return Err(Error::UnknownParent(p.clone()));
            }
        }
        let mut def = TypeDef {
            name: name.to_string(),
            parents,
            components: Vec::new(),
            keys: Vec::new(),
            impls: BTreeMap::new(),
        };
        // Registered first so that self references and type-level keys resolve.
        self.classes.insert(name.to_string(), def.clone());
        let result = (|| {
            let mut inherited: BTreeMap<String, String> = BTreeMap::new();
            for c in self.effective_components(name)? {
                if let Some(prev) = inherited.insert(c.spec.name.clone(), c.owner.clone()) {
                    if prev != c.owner {
                        return Err(Error::DuplicateName(format!("{} inherited from {prev} and {}", c.spec.name, c.owner)));
                    }
                }
            }
            for d in components {
                if inherited.contains_key(&d.name) || def.own(&d.name).is_some() {
                    return Err(Error::DuplicateName(format!("{name}.{}", d.name)));
                }
                def.components.push(self.component_spec(name, d)?);
                self.classes.insert(name.to_string(), def.clone());
            }
            for k in keys {
                def.keys.push(self.key_spec(name, None, k)?);
            }
            Ok(())
        })();
        match result {
            Ok(()) => {
                self.classes.insert(name.to_string(), def);
                Ok(())
            }
            Err(e) => {
                self.classes.remove(name);
                Err(e)
            }
        }
    }

    fn own_or_inherited(&self, ty: &str, comp: &str) -> Result<()> {
        if self.class(ty)?.own(comp).is_some() {
            return Ok(());
        }
        match self.component(ty, comp) {
            Ok(_) => Err(Error::CannotAlterInherited(format!("{ty}.{comp}"))),
            Err(e) => Err(e),
        }
    }

    pub fn add_component(&mut self, ty: &str, d: &ComponentDecl) -> Result<()> {
        if self.effective_components(ty)?.iter().any(|c| c.spec.name == d.name) {
            return Err(Error::DuplicateName(format!("{ty}.{}", d.name)));
        }
        for sub in self.descendants(ty) {
            if self.class(&sub)?.own(&d.name).is_some() {
                return Err(Error::DuplicateName(format!("{sub}.{}", d.name)));
            }
        }
        let spec = self.component_spec(ty, d)?;
        self.class_mut(ty)?.components.push(spec);
        Ok(())
    }

    pub fn drop_component(&mut self, ty: &str, comp: &str) -> Result<()> {
        self.own_or_inherited(ty, comp)?;
        let c = self.class_mut(ty)?;
        c.components.retain(|s| s.name != comp);
        c.keys.retain(|k| !k.fields.contains(&AttrName::new(comp)));
        for sub in self.descendants(ty) {
            self.class_mut(&sub)?.impls.remove(comp);
        }
        Ok(())
    }

    pub fn alter_component(&mut self, ty: &str, d: &ComponentDecl) -> Result<()> {
        self.own_or_inherited(ty, &d.name)?;
        let spec = self.component_spec(ty, d)?;
        let kind_changed = {
            let old = self.class(ty)?.own(&d.name).expect("checked above");
            old.is_method() != spec.is_method()
        };
        if kind_changed {
            for sub in self.descendants(ty) {
                self.class_mut(&sub)?.impls.remove(&d.name);
            }
        }
        let c = self.class_mut(ty)?;
        let slot = c.components.iter_mut().find(|s| s.name == d.name).expect("checked above");
        *slot = spec;
        Ok(())
    }

    pub fn add_key(&mut self, ty: &str, k: &KeyDecl) -> Result<()> {
        let spec = self.key_spec(ty, None, k)?;
        self.class_mut(ty)?.keys.push(spec);
        Ok(())
    }

    /// Records a realization after checking that its kind fits the component.
    pub fn realize(&mut self, ty: &str, comp: &str, imp: Impl) -> Result<()> {
        let c = self.component(ty, comp)?;
        let fits = match imp {
            Impl::Stored | Impl::Computed(_) => c.spec.is_attribute(),
            Impl::Method(_) => c.spec.is_method(),
        };
        if !fits {
            return Err(Error::ImplKindMismatch(format!("{ty}.{comp}")));
        }
        self.class_mut(ty)?.impls.insert(comp.to_string(), imp);
        Ok(())
    }

    /// Reasons why `ty` cannot be dropped, if any.
    pub fn usage_of(&self, ty: &str) -> Option<String> {
        for c in self.classes.values() {
            if c.parents.iter().any(|p| p == ty) {
                return Some(format!("{} extends it", c.name));
            }
            if c.name != ty {
                for s in &c.components {
                    let mentions = s.ty.as_ref().and_then(ValueType::refs) == Some(ty)
                        || s.params.iter().flatten().any(|(_, t)| *t == ScalarType::Ref(ty.to_string()));
                    if mentions {
                        return Some(format!("{}.{} refers to it", c.name, s.name));
                    }
                }
            }
        }
        for t in self.tuples.values() {
            if t.attrs.iter().any(|(_, s)| *s == ScalarType::Ref(ty.to_string())) {
                return Some(format!("tuple type {} refers to it", t.name));
            }
        }
        None
    }
}
