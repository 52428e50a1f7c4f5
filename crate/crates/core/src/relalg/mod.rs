//! Relational kernel: values, schemes, relation values and the algebra.

mod expr;
mod relation;
mod scheme;
mod value;

pub use expr::{arith, ArithOp, Bound, CmpOp, RowExpr};
pub use relation::{AggFunc, Aggregate, Relation, Tuple};
pub use scheme::{Attr, AttrName, ForeignTarget, KeyKind, KeySpec, Scheme};
pub use value::{Date, Oid, ScalarType, Value};
