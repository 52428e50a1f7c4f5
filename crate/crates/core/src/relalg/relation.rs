use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::expr::{arith, ArithOp, RowExpr};
use super::scheme::{same_domain, Attr, AttrName, KeyKind, Scheme};
use super::value::{ScalarType, Value};
use crate::error::{Error, Result};

pub type Tuple = Vec<Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AggFunc {
    Sum,
    Count,
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFunc::Sum => "Sum",
            AggFunc::Count => "Count",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub func: AggFunc,
    pub expr: RowExpr,
    pub name: AttrName,
}

impl Aggregate {
    pub fn new(func: AggFunc, expr: RowExpr, name: impl Into<AttrName>) -> Self {
        Aggregate { func, expr, name: name.into() }
    }
}

/// Immutable-by-convention relation value: a scheme plus a duplicate-free
/// set of tuples. All operations return fresh relations without keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    scheme: Scheme,
    tuples: BTreeSet<Tuple>,
}

impl Relation {
    pub fn empty(scheme: Scheme) -> Self {
        Relation { scheme, tuples: BTreeSet::new() }
    }

    pub fn from_tuples<I: IntoIterator<Item = Tuple>>(scheme: Scheme, tuples: I) -> Result<Self> {
        let mut r = Relation::empty(scheme);
        for t in tuples {
            r.insert(t)?;
        }
        Ok(r)
    }

    /// Builds a relation from tuples already known to conform.
    pub(crate) fn from_set_unchecked(scheme: Scheme, tuples: BTreeSet<Tuple>) -> Self {
        Relation { scheme, tuples }.checked()
    }

    /// One-column, one-row relation.
    pub fn singleton(name: impl Into<AttrName>, ty: ScalarType, v: Value) -> Result<Self> {
        Relation::from_tuples(Scheme::new(vec![Attr::new(name, ty)])?, [vec![v]])
    }

    fn checked(self) -> Self {
        debug_assert!(self.conforms(), "relation does not conform to its scheme");
        self
    }

    /// Whether every tuple matches the scheme's arity and types.
    pub fn conforms(&self) -> bool {
        self.tuples.iter().all(|t| {
            t.len() == self.scheme.len()
                && t.iter().zip(&self.scheme.attrs).all(|(v, a)| v.conforms(&a.ty))
        })
    }

    pub fn insert(&mut self, tuple: Tuple) -> Result<bool> {
        if tuple.len() != self.scheme.len() {
            return Err(Error::SchemeMismatch(format!(
                "tuple of arity {} for scheme {}",
                tuple.len(),
                self.scheme
            )));
        }
        let mut out = Vec::with_capacity(tuple.len());
        for (v, a) in tuple.into_iter().zip(&self.scheme.attrs) {
            let shown = v.to_string();
            out.push(v.coerce(&a.ty).ok_or_else(|| {
                Error::TypeMismatch(format!("value {shown} for {}:{}", a.name, a.ty))
            })?);
        }
        Ok(self.tuples.insert(out))
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn tuples(&self) -> &BTreeSet<Tuple> {
        &self.tuples
    }

    pub fn into_tuples(self) -> BTreeSet<Tuple> {
        self.tuples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn with_scheme_keys(mut self, keys: Vec<super::scheme::KeySpec>) -> Result<Self> {
        self.scheme = Scheme::with_keys(self.scheme.attrs, keys)?;
        Ok(self)
    }

    pub fn without_keys(mut self) -> Self {
        self.scheme.keys.clear();
        self
    }

    /// Distinct values of one attribute.
    pub fn column(&self, name: &AttrName) -> Result<BTreeSet<Value>> {
        let i = self.scheme.require(name)?;
        Ok(self.tuples.iter().map(|t| t[i].clone()).collect())
    }

    /// Set equality ignoring attribute order.
    pub fn same_as(&self, other: &Relation) -> bool {
        match other.reorder_to(&self.scheme) {
            Ok(o) => o.tuples == self.tuples,
            Err(_) => false,
        }
    }

    /// Permutes the columns to follow the attribute order of `target`.
    pub fn reorder_to(&self, target: &Scheme) -> Result<Relation> {
        let idx = self.scheme.alignment(target)?;
        let mut inv = vec![0; idx.len()];
        for (i, j) in idx.iter().enumerate() {
            inv[*j] = i;
        }
        let tuples = self.tuples.iter().map(|t| inv.iter().map(|&i| t[i].clone()).collect());
        Ok(Relation::from_set_unchecked(target.without_keys(), tuples.collect()))
    }

    fn aligned_tuples<'a>(&self, other: &'a Relation) -> Result<Box<dyn Iterator<Item = Tuple> + 'a>> {
        let idx = self.scheme.alignment(&other.scheme)?;
        Ok(Box::new(other.tuples.iter().map(move |t| idx.iter().map(|&i| t[i].clone()).collect())))
    }

    pub fn union(&self, other: &Relation) -> Result<Relation> {
        let mut tuples = self.tuples.clone();
        tuples.extend(self.aligned_tuples(other)?);
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    pub fn minus(&self, other: &Relation) -> Result<Relation> {
        let drop: BTreeSet<Tuple> = self.aligned_tuples(other)?.collect();
        let tuples = self.tuples.difference(&drop).cloned().collect();
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    pub fn intersect(&self, other: &Relation) -> Result<Relation> {
        let keep: BTreeSet<Tuple> = self.aligned_tuples(other)?.collect();
        let tuples = self.tuples.intersection(&keep).cloned().collect();
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    pub fn product(&self, other: &Relation) -> Result<Relation> {
        let mut attrs = self.scheme.attrs.clone();
        attrs.extend(other.scheme.attrs.iter().cloned());
        let scheme = Scheme::new(attrs)?;
        let mut tuples = BTreeSet::new();
        for a in &self.tuples {
            for b in &other.tuples {
                let mut t = a.clone();
                t.extend(b.iter().cloned());
                tuples.insert(t);
            }
        }
        Ok(Relation::from_set_unchecked(scheme, tuples))
    }

    fn join_positions(
        &self,
        other: &Relation,
        pairs: &[(AttrName, AttrName)],
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut li = Vec::new();
        let mut ri = Vec::new();
        for (l, r) in pairs {
            let i = self.scheme.require(l)?;
            let j = other.scheme.require(r)?;
            let (tl, tr) = (&self.scheme.attrs[i].ty, &other.scheme.attrs[j].ty);
            if !same_domain(tl, tr) {
                return Err(Error::SchemeMismatch(format!("join of {l}:{tl} with {r}:{tr}")));
            }
            li.push(i);
            ri.push(j);
        }
        Ok((li, ri))
    }

    fn index_by(&self, cols: &[usize]) -> BTreeMap<Tuple, Vec<&Tuple>> {
        let mut m: BTreeMap<Tuple, Vec<&Tuple>> = BTreeMap::new();
        for t in &self.tuples {
            let key: Tuple = cols.iter().map(|&i| t[i].clone()).collect();
            if key.iter().any(Value::is_undefined) {
                continue;
            }
            m.entry(key).or_default().push(t);
        }
        m
    }

    /// Equi-join on the listed pairs; the right operand's join columns are
    /// dropped. Undefined never matches.
    pub fn join_on(&self, other: &Relation, pairs: &[(AttrName, AttrName)]) -> Result<Relation> {
        let (li, ri) = self.join_positions(other, pairs)?;
        let keep_r: Vec<usize> = (0..other.scheme.len()).filter(|j| !ri.contains(j)).collect();
        let mut attrs = self.scheme.attrs.clone();
        attrs.extend(keep_r.iter().map(|&j| other.scheme.attrs[j].clone()));
        let scheme = Scheme::new(attrs)?;
        let index = other.index_by(&ri);
        let mut tuples = BTreeSet::new();
        for a in &self.tuples {
            let key: Tuple = li.iter().map(|&i| a[i].clone()).collect();
            if let Some(bs) = index.get(&key) {
                for b in bs {
                    let mut t = a.clone();
                    t.extend(keep_r.iter().map(|&j| b[j].clone()));
                    tuples.insert(t);
                }
            }
        }
        Ok(Relation::from_set_unchecked(scheme, tuples))
    }

    /// Join on all commonly named attributes.
    pub fn natural_join(&self, other: &Relation) -> Result<Relation> {
        let pairs: Vec<(AttrName, AttrName)> = self
            .scheme
            .names()
            .filter(|n| other.scheme.index_of(n).is_some())
            .map(|n| (n.clone(), n.clone()))
            .collect();
        self.join_on(other, &pairs)
    }

    /// Tuples of `self` with at least one partner in `other`.
    pub fn semijoin(&self, other: &Relation, pairs: &[(AttrName, AttrName)]) -> Result<Relation> {
        self.filter_join(other, pairs, true)
    }

    /// Tuples of `self` with no partner in `other`.
    pub fn antijoin(&self, other: &Relation, pairs: &[(AttrName, AttrName)]) -> Result<Relation> {
        self.filter_join(other, pairs, false)
    }

    fn filter_join(&self, other: &Relation, pairs: &[(AttrName, AttrName)], keep: bool) -> Result<Relation> {
        let (li, ri) = self.join_positions(other, pairs)?;
        let index = other.index_by(&ri);
        let tuples = self
            .tuples
            .iter()
            .filter(|a| {
                let key: Tuple = li.iter().map(|&i| a[i].clone()).collect();
                index.contains_key(&key) == keep
            })
            .cloned()
            .collect();
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    pub fn select_where(&self, cond: &RowExpr) -> Result<Relation> {
        let (b, ty) = cond.bind(&self.scheme)?;
        if ty != ScalarType::Boolean {
            return Err(Error::TypeMismatch(format!("selection condition of type {ty}")));
        }
        let mut tuples = BTreeSet::new();
        for t in &self.tuples {
            if b.truth(t)? {
                tuples.insert(t.clone());
            }
        }
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    /// Projection onto `keep`, in the given order.
    pub fn project(&self, keep: &[AttrName]) -> Result<Relation> {
        let idx: Vec<usize> = keep.iter().map(|n| self.scheme.require(n)).collect::<Result<_>>()?;
        let scheme = Scheme::new(idx.iter().map(|&i| self.scheme.attrs[i].clone()).collect())?;
        let tuples = self.tuples.iter().map(|t| idx.iter().map(|&i| t[i].clone()).collect()).collect();
        Ok(Relation::from_set_unchecked(scheme, tuples))
    }

    /// Projection onto all attributes except `drop`.
    pub fn project_drop(&self, drop: &[AttrName]) -> Result<Relation> {
        for n in drop {
            self.scheme.require(n)?;
        }
        let keep: Vec<AttrName> = self.scheme.names().filter(|n| !drop.contains(n)).cloned().collect();
        self.project(&keep)
    }

    /// The general projection: exactly one of `keep` / `drop` non-empty, then renames.
    pub fn project_with(
        &self,
        keep: &[AttrName],
        drop: &[AttrName],
        renames: &[(AttrName, AttrName)],
    ) -> Result<Relation> {
        let r = match (keep.is_empty(), drop.is_empty()) {
            (false, true) => self.project(keep)?,
            (true, false) => self.project_drop(drop)?,
            (true, true) => self.project(&[])?,
            (false, false) => {
                return Err(Error::SchemeMismatch("projection with both keep and drop lists".into()))
            }
        };
        r.rename(renames)
    }

    pub fn rename(&self, renames: &[(AttrName, AttrName)]) -> Result<Relation> {
        let mut attrs = self.scheme.attrs.clone();
        for (from, _) in renames {
            self.scheme.require(from)?;
        }
        for a in attrs.iter_mut() {
            if let Some((_, to)) = renames.iter().find(|(f, _)| *f == a.name) {
                a.name = to.clone();
            }
        }
        let scheme = Scheme::new(attrs)?;
        Ok(Relation::from_set_unchecked(scheme, self.tuples.clone()))
    }

    /// Adds a computed attribute.
    pub fn extend(&self, name: impl Into<AttrName>, expr: &RowExpr) -> Result<Relation> {
        let name = name.into();
        let (b, ty) = expr.bind(&self.scheme)?;
        let mut attrs = self.scheme.attrs.clone();
        attrs.push(Attr { name, ty });
        let scheme = Scheme::new(attrs)?;
        let mut tuples = BTreeSet::new();
        for t in &self.tuples {
            let mut t2 = t.clone();
            t2.push(b.eval(t)?);
            tuples.insert(t2);
        }
        Ok(Relation::from_set_unchecked(scheme, tuples))
    }

    /// Rewrites attributes in place; each new value is computed from the old tuple.
    pub fn replace(&self, sets: &[(AttrName, RowExpr)]) -> Result<Relation> {
        let mut bound = Vec::new();
        for (n, e) in sets {
            let i = self.scheme.require(n)?;
            let (b, ty) = e.bind(&self.scheme)?;
            let target = &self.scheme.attrs[i].ty;
            let ok = same_domain(&ty, target)
                || (ty == ScalarType::Integer && *target == ScalarType::Float);
            if !ok {
                return Err(Error::TypeMismatch(format!("cannot assign {ty} to {n}:{target}")));
            }
            bound.push((i, b));
        }
        let mut tuples = BTreeSet::new();
        for t in &self.tuples {
            let mut t2 = t.clone();
            for (i, b) in &bound {
                t2[*i] = b
                    .eval(t)?
                    .coerce(&self.scheme.attrs[*i].ty)
                    .ok_or_else(|| Error::TypeMismatch("replacement value".into()))?;
            }
            tuples.insert(t2);
        }
        Ok(Relation::from_set_unchecked(self.scheme.without_keys(), tuples))
    }

    /// Grouping with SUM / COUNT. SUM of a group whose inputs are all
    /// undefined is undefined; COUNT counts defined inputs.
    pub fn summarize(&self, by: &[AttrName], adds: &[Aggregate]) -> Result<Relation> {
        let by_idx: Vec<usize> = by.iter().map(|n| self.scheme.require(n)).collect::<Result<_>>()?;
        let mut attrs: Vec<Attr> = by_idx.iter().map(|&i| self.scheme.attrs[i].clone()).collect();
        let mut bound = Vec::new();
        for a in adds {
            let (b, ty) = a.expr.bind(&self.scheme)?;
            let out_ty = match a.func {
                AggFunc::Sum if ty.is_numeric() => ty,
                AggFunc::Sum => {
                    return Err(Error::TypeMismatch(format!("Sum over {ty} in {}", a.name)))
                }
                AggFunc::Count => ScalarType::Integer,
            };
            attrs.push(Attr { name: a.name.clone(), ty: out_ty });
            bound.push((a.func, b));
        }
        let scheme = Scheme::new(attrs)?;
        let mut groups: BTreeMap<Tuple, Vec<Value>> = BTreeMap::new();
        for t in &self.tuples {
            let key: Tuple = by_idx.iter().map(|&i| t[i].clone()).collect();
            let acc = groups.entry(key).or_insert_with(|| {
                bound
                    .iter()
                    .map(|(f, _)| match f {
                        AggFunc::Sum => Value::Undefined,
                        AggFunc::Count => Value::Int(0),
                    })
                    .collect()
            });
            for (k, (f, b)) in bound.iter().enumerate() {
                let v = b.eval(t)?;
                if v.is_undefined() {
                    continue;
                }
                acc[k] = match f {
                    AggFunc::Sum if acc[k].is_undefined() => v,
                    AggFunc::Sum => arith(ArithOp::Add, &acc[k], &v)?,
                    AggFunc::Count => arith(ArithOp::Add, &acc[k], &Value::Int(1))?,
                };
            }
        }
        let tuples = groups
            .into_iter()
            .map(|(mut k, acc)| {
                k.extend(acc);
                k
            })
            .collect();
        Ok(Relation::from_set_unchecked(scheme, tuples))
    }

    /// Checks the scheme's local and global keys: no two tuples agree on all
    /// key fields, and key fields are defined.
    pub fn check_keys(&self) -> Result<()> {
        for k in &self.scheme.keys {
            if k.kind == KeyKind::Foreign {
                continue;
            }
            let idx: Vec<usize> = k.fields.iter().map(|n| self.scheme.require(n)).collect::<Result<_>>()?;
            let mut seen = BTreeSet::new();
            for t in &self.tuples {
                let key: Tuple = idx.iter().map(|&i| t[i].clone()).collect();
                if key.iter().any(Value::is_undefined) {
                    return Err(Error::KeyViolation(format!("undefined value in key {k}")));
                }
                if !seen.insert(key.clone()) {
                    let shown: Vec<String> = key.iter().map(|v| v.to_string()).collect();
                    return Err(Error::KeyViolation(format!("duplicate ({}) for {k}", shown.join(", "))));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {{", self.scheme)?;
        for (i, t) in self.tuples.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let vs: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            write!(f, " ({})", vs.join(", "))?;
        }
        f.write_str(" }")
    }
}
