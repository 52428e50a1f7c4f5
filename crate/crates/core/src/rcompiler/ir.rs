//! Typed intermediate form shared by the per-object interpreter and the
//! set-at-a-time executor.

use std::collections::BTreeMap;

use crate::lang::SetOp;
use crate::relalg::{AggFunc, ArithOp, AttrName, CmpOp, ScalarType, Scheme, Value};
use crate::typesys::ValueType;

/// Relation-valued expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Rel {
    /// Value of a component of `this`, without OID.
    ThisComp(String),
    TypeVar(String),
    CompVar(String, String),
    Global(String),
    Catalog(String),
    Local(String),
    /// Every live object of the type, as a group.
    Members(String),
    FromScalar(Box<Scalar>, AttrName),
    Tuple(Vec<(AttrName, Scalar)>),
    /// The group `(OID)` holding one reference, or nothing when undefined.
    Group(Box<Scalar>, String),
    /// References held in attribute `attr`, as a group of `ty` objects.
    AttrGroup(Box<Rel>, AttrName, String),
    /// Component rows `(OID, fields)` of the objects of a group.
    Deref { group: Box<Rel>, ty: String, comp: String },
    /// Type R-variable rows of the objects of a group.
    DerefType { group: Box<Rel>, ty: String },
    SetOp(SetOp, Box<Rel>, Box<Rel>),
    Where(Box<Rel>, Row),
    Project(Box<Rel>, Vec<AttrName>),
    Rename(Box<Rel>, Vec<(AttrName, AttrName)>),
    Replace(Box<Rel>, Vec<(AttrName, Row)>),
    Expand(Box<Rel>, AttrName, String),
    Summarize(Box<Rel>, Vec<AttrName>, Vec<(AggFunc, Row, AttrName)>),
    Ov(Box<Rel>, Vec<Row>),
    ObjectOf(Box<Rel>),
    /// Group invocation; the result is `(OID, value fields)`.
    Call { group: Box<Rel>, ty: String, method: String, args: Vec<Scalar> },
}

/// Scalar expression evaluated once per context object.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Lit(Value, ScalarType),
    This(String),
    Param(String, ScalarType),
    Local(String, ScalarType),
    Arith(ArithOp, Box<Scalar>, Box<Scalar>),
    Neg(Box<Scalar>),
    Cmp(CmpOp, Box<Scalar>, Box<Scalar>),
    And(Box<Scalar>, Box<Scalar>),
    Or(Box<Scalar>, Box<Scalar>),
    Not(Box<Scalar>),
    IsNull(Box<Scalar>),
    Exist(Box<Rel>),
    /// The value of `attr` in the only row, undefined when there is none.
    Single(Box<Rel>, AttrName, ScalarType),
    IsType(Box<Scalar>, String, bool),
    Today,
}

/// Expression over the rows of one relation.
#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Attr(AttrName, ScalarType),
    Lit(Value, ScalarType),
    /// A value of the enclosing context, constant across the rows.
    Outer(Box<Scalar>),
    Arith(ArithOp, Box<Row>, Box<Row>),
    Neg(Box<Row>),
    Cmp(CmpOp, Box<Row>, Box<Row>),
    And(Box<Row>, Box<Row>),
    Or(Box<Row>, Box<Row>),
    Not(Box<Row>),
    IsNull(Box<Row>),
    /// The reference is a member of the group.
    InGroup(Box<Row>, Box<Rel>),
    IsType(Box<Row>, String, bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ir {
    S(Scalar, ScalarType),
    R(Rel, Scheme),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Local(String),
    Global(String),
    ThisComp(String),
    /// Component `comp` of the objects in `group`, or of every `ty` object.
    GroupComp { group: Option<Rel>, ty: String, comp: String },
}

/// New value of a write target, with DML already expressed per target.
#[derive(Debug, Clone, PartialEq)]
pub enum WriteOp {
    Assign(Ir),
    Insert(Ir),
    Delete(Option<Row>),
    Update(Vec<(AttrName, Row)>, Option<Row>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Write { target: Target, op: WriteOp },
    If { cond: Scalar, then: Vec<Stmt>, els: Vec<Stmt> },
    DoWhile { body: Vec<Stmt>, cond: Scalar },
    Return(Option<Ir>),
    Exec(Rel),
}

/// A method body ready for execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub ty: String,
    pub method: String,
    pub params: Vec<(String, ScalarType)>,
    pub locals: BTreeMap<String, (ValueType, Scheme)>,
    /// Scheme of the returned value, without OID.
    pub result: Option<Scheme>,
    pub body: Vec<Stmt>,
}

/// A computed component: its defining expression, typed against the component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputedIr {
    pub ty: String,
    pub comp: String,
    pub expr: Ir,
}

pub fn arith_type(op: ArithOp, a: &ScalarType, b: &ScalarType) -> Option<ScalarType> {
    match (a, b) {
        (ScalarType::Integer, ScalarType::Integer) => Some(ScalarType::Integer),
        (x, y) if x.is_numeric() && y.is_numeric() => Some(ScalarType::Float),
        (ScalarType::String, ScalarType::String) if op == ArithOp::Add => Some(ScalarType::String),
        _ => None,
    }
}

impl Scalar {
    pub fn ty(&self) -> ScalarType {
        match self {
            Scalar::Lit(_, t) | Scalar::Param(_, t) | Scalar::Local(_, t) | Scalar::Single(_, _, t) => t.clone(),
            Scalar::This(t) => ScalarType::Ref(t.clone()),
            Scalar::Arith(op, a, b) => arith_type(*op, &a.ty(), &b.ty()).unwrap_or(ScalarType::Float),
            Scalar::Neg(a) => a.ty(),
            Scalar::Today => ScalarType::Date,
            Scalar::Cmp(..)
            | Scalar::And(..)
            | Scalar::Or(..)
            | Scalar::Not(_)
            | Scalar::IsNull(_)
            | Scalar::Exist(_)
            | Scalar::IsType(..) => ScalarType::Boolean,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Scalar::Lit(Value::Undefined, _))
    }
}

impl Row {
    pub fn ty(&self) -> ScalarType {
        match self {
            Row::Attr(_, t) | Row::Lit(_, t) => t.clone(),
            Row::Outer(s) => s.ty(),
            Row::Arith(op, a, b) => arith_type(*op, &a.ty(), &b.ty()).unwrap_or(ScalarType::Float),
            Row::Neg(a) => a.ty(),
            Row::Cmp(..)
            | Row::And(..)
            | Row::Or(..)
            | Row::Not(_)
            | Row::IsNull(_)
            | Row::InGroup(..)
            | Row::IsType(..) => ScalarType::Boolean,
        }
    }
}

impl Ir {
    pub fn scheme(&self) -> Option<&Scheme> {
        match self {
            Ir::R(_, s) => Some(s),
            Ir::S(..) => None,
        }
    }
}
