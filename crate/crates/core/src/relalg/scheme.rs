use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::ScalarType;
use crate::error::{Error, Result};

/// A possibly refined attribute name, e.g. `MovedItems.Quantity`.
///
/// Segments are kept as a list and never re-split from the display form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttrName(pub Vec<String>);

impl AttrName {
    pub fn new(s: impl Into<String>) -> Self {
        AttrName(vec![s.into()])
    }

    pub fn from_segments<I, S>(segs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AttrName(segs.into_iter().map(Into::into).collect())
    }

    /// The reserved back-reference attribute of every R-variable.
    pub fn oid() -> Self {
        AttrName::new("OID")
    }

    /// The context-object column threaded through compiled programs.
    pub fn this() -> Self {
        AttrName::new("#this")
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn is_oid(&self) -> bool {
        self.0.len() == 1 && self.0[0] == "OID"
    }

    pub fn is_internal(&self) -> bool {
        self.0.first().is_some_and(|s| s.starts_with('#'))
    }

    /// `prefix.self`
    pub fn refined(&self, prefix: &AttrName) -> AttrName {
        let mut segs = prefix.0.clone();
        segs.extend(self.0.iter().cloned());
        AttrName(segs)
    }

    pub fn starts_with(&self, prefix: &AttrName) -> bool {
        self.0.len() >= prefix.0.len() && self.0[..prefix.0.len()] == prefix.0[..]
    }

    pub fn strip_prefix(&self, prefix: &AttrName) -> Option<AttrName> {
        if self.starts_with(prefix) && self.0.len() > prefix.0.len() {
            Some(AttrName(self.0[prefix.0.len()..].to_vec()))
        } else {
            None
        }
    }
}

impl fmt::Display for AttrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl From<&str> for AttrName {
    fn from(s: &str) -> Self {
        AttrName::from_segments(s.split('.'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attr {
    pub name: AttrName,
    pub ty: ScalarType,
}

impl Attr {
    pub fn new(name: impl Into<AttrName>, ty: ScalarType) -> Self {
        Attr { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyKind {
    Local,
    Global,
    Foreign,
}

impl fmt::Display for KeyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyKind::Local => "LOCALKEY",
            KeyKind::Global => "GLOBALKEY",
            KeyKind::Foreign => "FOREIGNKEY",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ForeignTarget {
    pub ty: String,
    /// Component holding the target fields; `None` for scalar attributes of the type.
    pub component: Option<String>,
    pub fields: Vec<AttrName>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeySpec {
    pub kind: KeyKind,
    pub fields: Vec<AttrName>,
    pub target: Option<ForeignTarget>,
}

impl KeySpec {
    pub fn new(kind: KeyKind, fields: Vec<AttrName>) -> Self {
        KeySpec { kind, fields, target: None }
    }
}

impl fmt::Display for KeySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fields: Vec<String> = self.fields.iter().map(|a| a.to_string()).collect();
        write!(f, "{} ({})", self.kind, fields.join(", "))?;
        if let Some(t) = &self.target {
            let tf: Vec<String> = t.fields.iter().map(|a| a.to_string()).collect();
            match &t.component {
                Some(c) => write!(f, " ON {}.{}.{}", t.ty, c, tf.join(","))?,
                None => write!(f, " ON {}.{}", t.ty, tf.join(","))?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Scheme {
    pub attrs: Vec<Attr>,
    pub keys: Vec<KeySpec>,
}

impl Scheme {
    pub fn new(attrs: Vec<Attr>) -> Result<Self> {
        let s = Scheme { attrs, keys: Vec::new() };
        s.check_unique()?;
        Ok(s)
    }

    pub fn with_keys(attrs: Vec<Attr>, keys: Vec<KeySpec>) -> Result<Self> {
        let s = Scheme { attrs, keys };
        s.check_unique()?;
        for k in &s.keys {
            for f in &k.fields {
                if s.index_of(f).is_none() {
                    return Err(Error::KeyFieldUnknown(f.to_string()));
                }
            }
        }
        Ok(s)
    }

    fn check_unique(&self) -> Result<()> {
        for (i, a) in self.attrs.iter().enumerate() {
            if self.attrs[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::AttrCollision(a.name.to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn index_of(&self, name: &AttrName) -> Option<usize> {
        self.attrs.iter().position(|a| &a.name == name)
    }

    pub fn require(&self, name: &AttrName) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn attr(&self, name: &AttrName) -> Option<&Attr> {
        self.attrs.iter().find(|a| &a.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &AttrName> {
        self.attrs.iter().map(|a| &a.name)
    }

    pub fn has_oid(&self) -> bool {
        self.index_of(&AttrName::oid()).is_some()
    }

    /// Same attribute names and types, ignoring order and keys. Reference
    /// types are interchangeable: every REF shares the OID domain.
    pub fn compatible(&self, other: &Scheme) -> bool {
        self.attrs.len() == other.attrs.len()
            && self.attrs.iter().all(|a| {
                other.attr(&a.name).is_some_and(|b| same_domain(&a.ty, &b.ty))
            })
    }

    /// Positions in `other` of each attribute of `self`, for order-insensitive
    /// set operations.
    pub fn alignment(&self, other: &Scheme) -> Result<Vec<usize>> {
        if !self.compatible(other) {
            return Err(Error::SchemeMismatch(format!("{self} vs {other}")));
        }
        Ok(self.attrs.iter().map(|a| other.index_of(&a.name).unwrap()).collect())
    }

    pub fn without_keys(&self) -> Scheme {
        Scheme { attrs: self.attrs.clone(), keys: Vec::new() }
    }
}

pub(crate) fn same_domain(a: &ScalarType, b: &ScalarType) -> bool {
    a == b || (a.is_ref() && b.is_ref())
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", a.name, a.ty)?;
        }
        f.write_str(")")
    }
}
