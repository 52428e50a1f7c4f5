//! Deterministic JSON dump and load of a database state.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::catalog::OidTable;
use crate::error::{Error, Result};
use crate::relalg::{Date, KeySpec, Oid, Relation, Scheme, Tuple, Value};
use crate::rcompiler;
use crate::storage::{Database, GlobalImpl, GlobalVar, State};
use crate::typesys::{TypeRegistry, ValueType};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Dump {
    format_version: u32,
    catalog: TypeRegistry,
    oids: OidDump,
    base: Vec<VarDump>,
    globals: Vec<GlobalDump>,
    realizations: Vec<RealizationDump>,
}

#[derive(Serialize, Deserialize)]
struct OidDump {
    next: u64,
    objects: Vec<(u64, String)>,
}

#[derive(Serialize, Deserialize)]
struct VarDump {
    #[serde(rename = "type")]
    ty: String,
    component: String,
    scheme: Scheme,
    rows: Vec<Vec<Json>>,
}

#[derive(Serialize, Deserialize)]
struct GlobalDump {
    name: String,
    #[serde(rename = "type")]
    ty: ValueType,
    keys: Vec<KeySpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stored: Option<StoredDump>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    computed: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct StoredDump {
    scheme: Scheme,
    rows: Vec<Vec<Json>>,
}

/// Canonical source of one realization, re-parsed and checked on load.
#[derive(Serialize, Deserialize)]
struct RealizationDump {
    #[serde(rename = "type")]
    ty: String,
    component: String,
    kind: String,
    source: String,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::IntegrityCheckFailed(msg.into())
}

fn enc(v: &Value) -> Json {
    match v {
        Value::Undefined => Json::Null,
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Float(x) => json!({ "float": format!("{x:?}") }),
        Value::Str(s) => json!(s),
        Value::Date(d) => json!({ "date": [d.day, d.month, d.year] }),
        Value::Oid(o) => json!({ "oid": o.0 }),
    }
}

fn dec(j: &Json) -> Result<Value> {
    Ok(match j {
        Json::Null => Value::Undefined,
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => Value::Int(n.as_i64().ok_or_else(|| bad(format!("integer {n} out of range")))?),
        Json::String(s) => Value::Str(s.clone()),
        Json::Object(m) if m.len() == 1 => {
            let (k, v) = m.iter().next().expect("one entry");
            match (k.as_str(), v) {
                ("float", Json::String(s)) => Value::Float(s.parse().map_err(|_| bad(format!("bad float {s}")))?),
                ("oid", Json::Number(n)) => Value::Oid(Oid(n.as_u64().ok_or_else(|| bad("bad oid"))?)),
                ("date", Json::Array(a)) if a.len() == 3 => {
                    let num = |i: usize| a[i].as_i64().ok_or_else(|| bad("bad date"));
                    let (d, m, y) = (num(0)?, num(1)?, num(2)?);
                    let d = u8::try_from(d).ok().zip(u8::try_from(m).ok()).zip(i32::try_from(y).ok());
                    let ((d, m), y) = d.ok_or_else(|| bad("bad date"))?;
                    Value::Date(Date::new(d, m, y).ok_or_else(|| bad("bad date"))?)
                }
                _ => return Err(bad(format!("unknown value encoding {j}"))),
            }
        }
        other => return Err(bad(format!("unknown value encoding {other}"))),
    })
}

fn rows_of(r: &Relation) -> Vec<Vec<Json>> {
    r.iter().map(|t| t.iter().map(enc).collect()).collect()
}

fn relation(scheme: Scheme, rows: &[Vec<Json>]) -> Result<Relation> {
    let mut tuples: Vec<Tuple> = Vec::new();
    for row in rows {
        tuples.push(row.iter().map(dec).collect::<Result<_>>()?);
    }
    Relation::from_tuples(scheme, tuples).map_err(|e| bad(e.to_string()))
}

/// The JSON text of a state. Equal states give identical text.
pub fn dump_state(st: &State) -> Result<String> {
    let mut realizations = Vec::new();
    for (ty, c) in &st.types.classes {
        for (comp, imp) in &c.impls {
            let (kind, source) = match imp {
                crate::typesys::Impl::Stored => ("stored", String::new()),
                crate::typesys::Impl::Computed(s) => ("computed", s.clone()),
                crate::typesys::Impl::Method(s) => ("method", s.clone()),
            };
            realizations.push(RealizationDump { ty: ty.clone(), component: comp.clone(), kind: kind.into(), source });
        }
    }
    let d = Dump {
        format_version: FORMAT_VERSION,
        catalog: st.types.clone(),
        oids: OidDump { next: st.oids.next, objects: st.oids.rows.iter().map(|(o, t)| (o.0, t.clone())).collect() },
        base: st
            .base
            .iter()
            .map(|((ty, comp), r)| VarDump {
                ty: ty.clone(),
                component: comp.clone(),
                scheme: r.scheme().clone(),
                rows: rows_of(r),
            })
            .collect(),
        globals: st
            .globals
            .iter()
            .map(|(name, g)| {
                let (stored, computed) = match &g.imp {
                    GlobalImpl::Stored(r) => (Some(StoredDump { scheme: r.scheme().clone(), rows: rows_of(r) }), None),
                    GlobalImpl::Computed(s) => (None, Some(s.clone())),
                };
                GlobalDump { name: name.clone(), ty: g.ty.clone(), keys: g.keys.clone(), stored, computed }
            })
            .collect(),
        realizations,
    };
    let mut text = serde_json::to_string_pretty(&d).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Rebuilds a state from dump text and checks it thoroughly.
pub fn load_state(text: &str) -> Result<State> {
    let raw: Json = serde_json::from_str(text).map_err(|e| bad(format!("not a readable dump: {e}")))?;
    let found = raw.get("format_version").and_then(Json::as_u64).ok_or_else(|| bad("missing format_version"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::FormatVersionMismatch { found: found.try_into().unwrap_or(u32::MAX), expected: FORMAT_VERSION });
    }
    let d: Dump = serde_json::from_value(raw).map_err(|e| bad(e.to_string()))?;
    let mut st = State { types: d.catalog, oids: OidTable::default(), base: BTreeMap::new(), globals: BTreeMap::new() };
    st.oids.next = d.oids.next;
    for (o, t) in d.oids.objects {
        st.types.class(&t).map_err(|e| bad(e.to_string()))?;
        st.oids.rows.insert(Oid(o), t);
    }
    if st.oids.rows.keys().next_back().is_some_and(|o| o.0 > st.oids.next) {
        return Err(bad("object counter behind the issued identifiers"));
    }
    for v in d.base {
        let r = relation(v.scheme, &v.rows)?;
        st.base.insert((v.ty, v.component), r);
    }
    for g in d.globals {
        let imp = match (g.stored, g.computed) {
            (Some(s), None) => GlobalImpl::Stored(relation(s.scheme, &s.rows)?),
            (None, Some(src)) => GlobalImpl::Computed(src),
            _ => return Err(bad(format!("global {} needs exactly one realization", g.name))),
        };
        st.globals.insert(g.name, GlobalVar { ty: g.ty, keys: g.keys, imp });
    }
    let listed: BTreeMap<(String, String), (String, String)> =
        d.realizations.into_iter().map(|r| ((r.ty, r.component), (r.kind, r.source))).collect();
    let mut actual = BTreeMap::new();
    for (ty, c) in &st.types.classes {
        for (comp, imp) in &c.impls {
            let v = match imp {
                crate::typesys::Impl::Stored => ("stored".to_string(), String::new()),
                crate::typesys::Impl::Computed(s) => ("computed".to_string(), s.clone()),
                crate::typesys::Impl::Method(s) => ("method".to_string(), s.clone()),
            };
            actual.insert((ty.clone(), comp.clone()), v);
        }
    }
    if listed != actual {
        return Err(bad("realizations disagree with the catalog"));
    }
    let mut check = st.clone();
    check.reconcile().map_err(|e| bad(e.to_string()))?;
    if check != st {
        return Err(bad("base variables do not match the catalog"));
    }
    rcompiler::check_realizations(&st).map_err(|e| bad(e.to_string()))?;
    let mut db = Database { state: st, ..Database::default() };
    db.enforce().map_err(|e| bad(e.to_string()))?;
    Ok(db.state)
}

impl Database {
    pub fn dump(&self) -> Result<String> {
        dump_state(&self.state)
    }

    pub fn dump_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()?)?;
        Ok(())
    }

    /// Replaces the state with the dumped one; the current state is kept on failure.
    pub fn load(&mut self, text: &str) -> Result<()> {
        if self.in_transaction() {
            return Err(Error::Transaction("cannot load inside a transaction".into()));
        }
        self.state = load_state(text)?;
        self.cache.clear();
        Ok(())
    }

    pub fn load_from(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.load(&text)
    }
}
