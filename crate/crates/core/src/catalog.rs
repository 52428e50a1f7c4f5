//! Catalog tables, the identifier table and type tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relalg::{Attr, Oid, Relation, ScalarType, Scheme, Value};
use crate::typesys::{Impl, TypeRegistry, ValueType};

/// Catalog relations that can be named in queries.
pub const TABLES: &[&str] = &["valTYPES", "objTYPES", "IS_T", "SPEC", "REAL", "OIDS"];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OidTable {
    pub rows: BTreeMap<Oid, String>,
    /// Next ordinal to hand out; never decreases.
    pub next: u64,
}

impl OidTable {
    pub fn issue(&mut self, ty: &str) -> Oid {
        self.next = self.next.max(self.rows.keys().next_back().map_or(0, |o| o.0)) + 1;
        let oid = Oid(self.next);
        self.rows.insert(oid, ty.to_string());
        oid
    }

    pub fn type_of(&self, o: Oid) -> Result<&str> {
        self.rows.get(&o).map(String::as_str).ok_or(Error::UnknownOid(o.0))
    }

    pub fn contains(&self, o: Oid) -> bool {
        self.rows.contains_key(&o)
    }

    /// `o OF t`: created by `NEW t`.
    pub fn is_of(&self, reg: &TypeRegistry, o: Oid, t: &str) -> Result<bool> {
        reg.class(t)?;
        Ok(self.type_of(o)? == t)
    }

    /// `o IS t`: created by `NEW t` or by `NEW` of a descendant.
    pub fn is_a(&self, reg: &TypeRegistry, o: Oid, t: &str) -> Result<bool> {
        reg.class(t)?;
        Ok(reg.is_subtype(self.type_of(o)?, t))
    }

    /// Live objects whose type is `t` or a descendant of it.
    pub fn members(&self, reg: &TypeRegistry, t: &str) -> Vec<Oid> {
        self.rows.iter().filter(|(_, ty)| reg.is_subtype(ty, t)).map(|(o, _)| *o).collect()
    }
}

fn rel(cols: &[(&str, ScalarType)], rows: Vec<Vec<Value>>) -> Relation {
    let scheme = Scheme::new(cols.iter().map(|(n, t)| Attr::new(*n, t.clone())).collect()).expect("distinct names");
    Relation::from_tuples(scheme, rows).expect("catalog rows conform")
}

fn s(x: &str) -> Value {
    Value::Str(x.to_string())
}

/// Builds the catalog relation `name`.
pub fn table(reg: &TypeRegistry, oids: &OidTable, name: &str) -> Option<Relation> {
    use ScalarType::{Boolean, String as Str};
    Some(match name {
        "valTYPES" => {
            let mut rows: Vec<Vec<Value>> =
                ["INTEGER", "FLOAT", "STRING", "BOOLEAN", "DATE", "DOID"].iter().map(|n| vec![s(n)]).collect();
            rows.extend(reg.tuples.keys().map(|n| vec![s(n)]));
            rows.extend(reg.classes.keys().map(|n| vec![s(n)]));
            rel(&[("vT", Str)], rows)
        }
        "objTYPES" => rel(&[("oT", Str)], reg.classes.keys().map(|n| vec![s(n)]).collect()),
        "IS_T" => {
            let mut rows = Vec::new();
            for c in reg.classes.keys() {
                for a in reg.ancestors(c).unwrap_or_default() {
                    rows.push(vec![s(c), s(&a)]);
                }
            }
            rel(&[("oT", Str.clone()), ("IS_oT", Str)], rows)
        }
        "SPEC" => {
            let mut rows = Vec::new();
            for c in reg.classes.values() {
                for comp in &c.components {
                    let vt = comp.ty.as_ref().map_or("".to_string(), ValueType::to_string);
                    let sig = match &comp.params {
                        None => String::new(),
                        Some(ps) => {
                            let ps: Vec<String> = ps.iter().map(|(n, t)| format!("{n} {t}")).collect();
                            format!("({})", ps.join(", "))
                        }
                    };
                    rows.push(vec![s(&comp.name), s(&c.name), s(&vt), s(&sig)]);
                }
            }
            rel(&[("A", Str.clone()), ("oT", Str.clone()), ("vT", Str.clone()), ("signature", Str)], rows)
        }
        "REAL" => {
            let mut rows = Vec::new();
            for c in reg.classes.values() {
                for (comp, imp) in &c.impls {
                    let (stored, text) = match imp {
                        Impl::Stored => (true, String::new()),
                        Impl::Computed(t) | Impl::Method(t) => (false, t.clone()),
                    };
                    rows.push(vec![s(comp), s(&c.name), Value::Bool(stored), s(&text)]);
                }
            }
            rel(&[("A", Str.clone()), ("OF_oT", Str.clone()), ("isSTORED", Boolean), ("RealExpr", Str)], rows)
        }
        "OIDS" => rel(
            &[("OID", ScalarType::doid()), ("OF_oT", Str)],
            oids.rows.iter().map(|(o, t)| vec![Value::Oid(*o), s(t)]).collect(),
        ),
        _ => return None,
    })
}
