use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// Opaque object identifier. Ordinals grow monotonically and are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Oid(pub u64);

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// Calendar date, ordered by (year, month, day).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(day: u8, month: u8, year: i32) -> Option<Date> {
        if !(1..=12).contains(&month) || day == 0 || day > days_in_month(month, year) {
            return None;
        }
        Some(Date { year, month, day })
    }

    /// Parses the `DD.MM.YYYY` body of a date literal.
    pub fn parse_dotted(s: &str) -> Option<Date> {
        let mut parts = s.split('.');
        let d = parts.next()?.trim().parse().ok()?;
        let m = parts.next()?.trim().parse().ok()?;
        let y = parts.next()?.trim().parse().ok()?;
        if parts.next().is_some() {
            return None;
        }
        Date::new(d, m, y)
    }
}

fn days_in_month(month: u8, year: i32) -> u8 {
    match month {
        4 | 6 | 9 | 11 => 30,
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02}.{:02}.{:04}#", self.day, self.month, self.year)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScalarType {
    Integer,
    Float,
    String,
    Boolean,
    Date,
    /// Reference to objects of the named type. `Ref("Object")` is the bare DOID domain.
    Ref(String),
}

impl ScalarType {
    pub fn doid() -> ScalarType {
        ScalarType::Ref("Object".to_string())
    }

    pub fn basic(name: &str) -> Option<ScalarType> {
        match name.to_ascii_uppercase().as_str() {
            "INTEGER" | "INT" => Some(ScalarType::Integer),
            "FLOAT" | "REAL" => Some(ScalarType::Float),
            "STRING" => Some(ScalarType::String),
            "BOOLEAN" | "BOOL" => Some(ScalarType::Boolean),
            "DATE" => Some(ScalarType::Date),
            "DOID" => Some(ScalarType::doid()),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ScalarType::Integer | ScalarType::Float)
    }

    pub fn is_ref(&self) -> bool {
        matches!(self, ScalarType::Ref(_))
    }

    /// Whether values of the two types may be compared with each other.
    pub fn comparable(&self, other: &ScalarType) -> bool {
        self == other
            || (self.is_numeric() && other.is_numeric())
            || (self.is_ref() && other.is_ref())
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarType::Integer => f.write_str("INTEGER"),
            ScalarType::Float => f.write_str("FLOAT"),
            ScalarType::String => f.write_str("STRING"),
            ScalarType::Boolean => f.write_str("BOOLEAN"),
            ScalarType::Date => f.write_str("DATE"),
            ScalarType::Ref(t) if t == "Object" => f.write_str("DOID"),
            ScalarType::Ref(t) => f.write_str(t),
        }
    }
}

/// A scalar value. Structural equality (used for set membership) treats
/// `Undefined` as equal to itself and compares floats bitwise; predicate
/// comparison goes through [`Value::compare`] instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Undefined,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Date(Date),
    Oid(Oid),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Undefined => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Float(_) => 3,
            Value::Str(_) => 4,
            Value::Date(_) => 5,
            Value::Oid(_) => 6,
        }
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self, Value::Undefined)
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_oid(&self) -> Option<Oid> {
        match self {
            Value::Oid(o) => Some(*o),
            _ => None,
        }
    }

    /// Predicate comparison: `None` whenever either side is undefined or the
    /// kinds are incomparable. Integers and floats compare numerically.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Undefined, _) | (_, Value::Undefined) => None,
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Float(a), Value::Float(b)) => a.partial_cmp(b),
            (Value::Int(a), Value::Float(b)) => (*a as f64).partial_cmp(b),
            (Value::Float(a), Value::Int(b)) => a.partial_cmp(&(*b as f64)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Oid(a), Value::Oid(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    pub fn conforms(&self, ty: &ScalarType) -> bool {
        matches!(
            (self, ty),
            (Value::Undefined, _)
                | (Value::Bool(_), ScalarType::Boolean)
                | (Value::Int(_), ScalarType::Integer)
                | (Value::Float(_), ScalarType::Float)
                | (Value::Str(_), ScalarType::String)
                | (Value::Date(_), ScalarType::Date)
                | (Value::Oid(_), ScalarType::Ref(_))
        )
    }

    /// Converts a value so that it conforms to `ty`, widening integers to floats.
    pub fn coerce(self, ty: &ScalarType) -> Option<Value> {
        match (self, ty) {
            (Value::Int(i), ScalarType::Float) => Some(Value::Float(i as f64)),
            (v, ty) if v.conforms(ty) => Some(v),
            _ => None,
        }
    }

    pub fn type_of(&self) -> Option<ScalarType> {
        match self {
            Value::Undefined => None,
            Value::Bool(_) => Some(ScalarType::Boolean),
            Value::Int(_) => Some(ScalarType::Integer),
            Value::Float(_) => Some(ScalarType::Float),
            Value::Str(_) => Some(ScalarType::String),
            Value::Date(_) => Some(ScalarType::Date),
            Value::Oid(_) => Some(ScalarType::doid()),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (Value::Oid(a), Value::Oid(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Undefined => {}
            Value::Bool(b) => b.hash(state),
            Value::Int(i) => i.hash(state),
            Value::Float(x) => x.to_bits().hash(state),
            Value::Str(s) => s.hash(state),
            Value::Date(d) => d.hash(state),
            Value::Oid(o) => o.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Undefined => f.write_str("NULL"),
            Value::Bool(true) => f.write_str("TRUE"),
            Value::Bool(false) => f.write_str("FALSE"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Date(d) => write!(f, "{d}"),
            Value::Oid(o) => write!(f, "{o}"),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<Oid> for Value {
    fn from(o: Oid) -> Self {
        Value::Oid(o)
    }
}
