use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scheme::{AttrName, Scheme};
use super::value::{ScalarType, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

/// Tuple-level scalar expression used by selection, extension and summaries.
///
/// Logic is two-valued: a comparison with an undefined operand is FALSE and an
/// undefined boolean counts as FALSE.
#[derive(Debug, Clone, PartialEq)]
pub enum RowExpr {
    Attr(AttrName),
    Lit(Value),
    Null(ScalarType),
    Arith(ArithOp, Box<RowExpr>, Box<RowExpr>),
    Neg(Box<RowExpr>),
    Cmp(CmpOp, Box<RowExpr>, Box<RowExpr>),
    And(Box<RowExpr>, Box<RowExpr>),
    Or(Box<RowExpr>, Box<RowExpr>),
    Not(Box<RowExpr>),
    IsNull(Box<RowExpr>),
    /// Membership in a constant set of values.
    In(Box<RowExpr>, Arc<BTreeSet<Value>>),
}

impl RowExpr {
    pub fn attr(name: impl Into<AttrName>) -> RowExpr {
        RowExpr::Attr(name.into())
    }

    pub fn lit(v: impl Into<Value>) -> RowExpr {
        RowExpr::Lit(v.into())
    }

    pub fn cmp(op: CmpOp, a: RowExpr, b: RowExpr) -> RowExpr {
        RowExpr::Cmp(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: RowExpr, b: RowExpr) -> RowExpr {
        RowExpr::cmp(CmpOp::Eq, a, b)
    }

    pub fn and(a: RowExpr, b: RowExpr) -> RowExpr {
        RowExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: RowExpr, b: RowExpr) -> RowExpr {
        RowExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn not(a: RowExpr) -> RowExpr {
        RowExpr::Not(Box::new(a))
    }

    pub fn arith(op: ArithOp, a: RowExpr, b: RowExpr) -> RowExpr {
        RowExpr::Arith(op, Box::new(a), Box::new(b))
    }

    /// A literal typed by `ty` when the value is undefined.
    pub fn typed_lit(v: Value, ty: &ScalarType) -> RowExpr {
        if v.is_undefined() {
            RowExpr::Null(ty.clone())
        } else {
            RowExpr::Lit(v)
        }
    }

    /// Resolves attribute positions against `scheme` and type-checks.
    pub fn bind(&self, scheme: &Scheme) -> Result<(Bound, ScalarType)> {
        Ok(match self {
            RowExpr::Attr(n) => {
                let i = scheme.require(n)?;
                (Bound::Col(i), scheme.attrs[i].ty.clone())
            }
            RowExpr::Lit(v) => {
                let ty = v
                    .type_of()
                    .ok_or_else(|| Error::TypeMismatch("untyped NULL literal".into()))?;
                (Bound::Lit(v.clone()), ty)
            }
            RowExpr::Null(ty) => (Bound::Lit(Value::Undefined), ty.clone()),
            RowExpr::Arith(op, a, b) => {
                let (ba, ta) = a.bind(scheme)?;
                let (bb, tb) = b.bind(scheme)?;
                let ty = arith_type(*op, &ta, &tb)?;
                (Bound::Arith(*op, Box::new(ba), Box::new(bb)), ty)
            }
            RowExpr::Neg(a) => {
                let (ba, ta) = a.bind(scheme)?;
                if !ta.is_numeric() {
                    return Err(Error::TypeMismatch(format!("cannot negate {ta}")));
                }
                (Bound::Neg(Box::new(ba)), ta)
            }
            RowExpr::Cmp(op, a, b) => {
                let (ba, ta) = a.bind(scheme)?;
                let (bb, tb) = b.bind(scheme)?;
                if !ta.comparable(&tb) {
                    return Err(Error::TypeMismatch(format!(
                        "cannot compare {ta} {} {tb}",
                        op.symbol()
                    )));
                }
                (Bound::Cmp(*op, Box::new(ba), Box::new(bb)), ScalarType::Boolean)
            }
            RowExpr::And(a, b) | RowExpr::Or(a, b) => {
                let (ba, ta) = a.bind(scheme)?;
                let (bb, tb) = b.bind(scheme)?;
                expect_bool(&ta)?;
                expect_bool(&tb)?;
                let node = if matches!(self, RowExpr::And(..)) {
                    Bound::And(Box::new(ba), Box::new(bb))
                } else {
                    Bound::Or(Box::new(ba), Box::new(bb))
                };
                (node, ScalarType::Boolean)
            }
            RowExpr::Not(a) => {
                let (ba, ta) = a.bind(scheme)?;
                expect_bool(&ta)?;
                (Bound::Not(Box::new(ba)), ScalarType::Boolean)
            }
            RowExpr::IsNull(a) => {
                let (ba, _) = a.bind(scheme)?;
                (Bound::IsNull(Box::new(ba)), ScalarType::Boolean)
            }
            RowExpr::In(a, set) => {
                let (ba, _) = a.bind(scheme)?;
                (Bound::In(Box::new(ba), set.clone()), ScalarType::Boolean)
            }
        })
    }

    pub fn type_in(&self, scheme: &Scheme) -> Result<ScalarType> {
        Ok(self.bind(scheme)?.1)
    }
}

fn expect_bool(t: &ScalarType) -> Result<()> {
    if *t == ScalarType::Boolean {
        Ok(())
    } else {
        Err(Error::TypeMismatch(format!("expected BOOLEAN, found {t}")))
    }
}

pub(crate) fn arith_type(op: ArithOp, a: &ScalarType, b: &ScalarType) -> Result<ScalarType> {
    match (a, b) {
        (ScalarType::Integer, ScalarType::Integer) => Ok(ScalarType::Integer),
        (x, y) if x.is_numeric() && y.is_numeric() => Ok(ScalarType::Float),
        (ScalarType::String, ScalarType::String) if op == ArithOp::Add => Ok(ScalarType::String),
        _ => Err(Error::TypeMismatch(format!("cannot apply {} to {a} and {b}", op.symbol()))),
    }
}

/// A [`RowExpr`] with attribute references resolved to column positions.
#[derive(Debug, Clone)]
pub enum Bound {
    Col(usize),
    Lit(Value),
    Arith(ArithOp, Box<Bound>, Box<Bound>),
    Neg(Box<Bound>),
    Cmp(CmpOp, Box<Bound>, Box<Bound>),
    And(Box<Bound>, Box<Bound>),
    Or(Box<Bound>, Box<Bound>),
    Not(Box<Bound>),
    IsNull(Box<Bound>),
    In(Box<Bound>, Arc<BTreeSet<Value>>),
}

impl Bound {
    pub fn eval(&self, row: &[Value]) -> Result<Value> {
        Ok(match self {
            Bound::Col(i) => row[*i].clone(),
            Bound::Lit(v) => v.clone(),
            Bound::Arith(op, a, b) => arith(*op, &a.eval(row)?, &b.eval(row)?)?,
            Bound::Neg(a) => match a.eval(row)? {
                Value::Int(i) => Value::Int(
                    i.checked_neg().ok_or_else(|| Error::eval("integer overflow"))?,
                ),
                Value::Float(x) => Value::Float(-x),
                _ => Value::Undefined,
            },
            Bound::Cmp(op, a, b) => {
                let (x, y) = (a.eval(row)?, b.eval(row)?);
                Value::Bool(x.compare(&y).is_some_and(|o| op.holds(o)))
            }
            Bound::And(a, b) => {
                let x = a.truth(row)?;
                let y = b.truth(row)?;
                Value::Bool(x && y)
            }
            Bound::Or(a, b) => {
                let x = a.truth(row)?;
                let y = b.truth(row)?;
                Value::Bool(x || y)
            }
            Bound::Not(a) => Value::Bool(!a.truth(row)?),
            Bound::IsNull(a) => Value::Bool(a.eval(row)?.is_undefined()),
            Bound::In(a, set) => {
                let v = a.eval(row)?;
                Value::Bool(!v.is_undefined() && set.contains(&v))
            }
        })
    }

    pub fn truth(&self, row: &[Value]) -> Result<bool> {
        Ok(self.eval(row)?.as_bool() == Some(true))
    }
}

pub fn arith(op: ArithOp, x: &Value, y: &Value) -> Result<Value> {
    let overflow = || Error::eval("integer overflow");
    Ok(match (x, y) {
        (Value::Undefined, _) | (_, Value::Undefined) => Value::Undefined,
        (Value::Int(a), Value::Int(b)) => Value::Int(match op {
            ArithOp::Add => a.checked_add(*b).ok_or_else(overflow)?,
            ArithOp::Sub => a.checked_sub(*b).ok_or_else(overflow)?,
            ArithOp::Mul => a.checked_mul(*b).ok_or_else(overflow)?,
            ArithOp::Div => {
                if *b == 0 {
                    return Err(Error::eval("division by zero"));
                }
                a.checked_div(*b).ok_or_else(overflow)?
            }
        }),
        (Value::Str(a), Value::Str(b)) if op == ArithOp::Add => Value::Str(format!("{a}{b}")),
        _ => {
            let a = as_f64(x).ok_or_else(|| Error::TypeMismatch(format!("{x} is not numeric")))?;
            let b = as_f64(y).ok_or_else(|| Error::TypeMismatch(format!("{y} is not numeric")))?;
            Value::Float(match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div => a / b,
            })
        }
    })
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

impl fmt::Display for RowExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowExpr::Attr(n) => write!(f, "{n}"),
            RowExpr::Lit(v) => write!(f, "{v}"),
            RowExpr::Null(_) => f.write_str("NULL"),
            RowExpr::Arith(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            RowExpr::Neg(a) => write!(f, "(-{a})"),
            RowExpr::Cmp(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            RowExpr::And(a, b) => write!(f, "({a} AND {b})"),
            RowExpr::Or(a, b) => write!(f, "({a} OR {b})"),
            RowExpr::Not(a) => write!(f, "(NOT {a})"),
            RowExpr::IsNull(a) => write!(f, "({a} IS NULL)"),
            RowExpr::In(a, set) => write!(f, "({a} IN <{} values>)", set.len()),
        }
    }
}
