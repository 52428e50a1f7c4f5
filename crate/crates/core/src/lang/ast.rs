//! Syntax tree of the command language.

use crate::relalg::{AggFunc, ArithOp, CmpOp, Date, KeyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

/// A dotted attribute path such as `MovedItems.Art`.
pub type Path = Vec<String>;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Date(Date),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Minus,
    Intersect,
    Times,
    Join,
}

impl SetOp {
    pub fn keyword(self) -> &'static str {
        match self {
            SetOp::Union => "UNION",
            SetOp::Minus => "MINUS",
            SetOp::Intersect => "INTERSECT",
            SetOp::Times => "TIMES",
            SetOp::Join => "JOIN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Arith(ArithOp),
    Cmp(CmpOp),
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggItem {
    pub func: AggFunc,
    pub arg: Expr,
    pub name: Path,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal),
    Name(String),
    This,
    Member(Box<Expr>, String),
    /// `target.name(args)` or, without a target, `name(args)`.
    Call { target: Option<Box<Expr>>, name: String, args: Vec<Expr> },
    Object(Box<Expr>),
    Exist(Box<Expr>),
    Where(Box<Expr>, Box<Expr>),
    Project { expr: Box<Expr>, names: Vec<Path>, drop: bool },
    Rename { expr: Box<Expr>, pairs: Vec<(Path, Path)> },
    Replace { expr: Box<Expr>, sets: Vec<(Path, Expr)> },
    SetOp(SetOp, Box<Expr>, Box<Expr>),
    Summarize { expr: Box<Expr>, by: Vec<Path>, adds: Vec<AggItem> },
    Expand(Box<Expr>, Path),
    Ov(Box<Expr>, Vec<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    IsNull(Box<Expr>),
    IsType { expr: Box<Expr>, ty: String, exact: bool },
    Tuple(Vec<(String, Expr)>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// The dotted path spelled by a chain of names and member accesses.
    pub fn as_path(&self) -> Option<Path> {
        match self {
            Expr::Name(n) => Some(vec![n.clone()]),
            Expr::Member(e, n) => {
                let mut p = e.as_path()?;
                p.push(n.clone());
                Some(p)
            }
            _ => None,
        }
    }

    pub fn path(p: &[String]) -> Expr {
        let mut e = Expr::Name(p[0].clone());
        for s in &p[1..] {
            e = Expr::Member(Box::new(e), s.clone());
        }
        e
    }
}

/// Syntax of a value type: a scalar, tuple or object type name, or a set of one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Named(String),
    SetOf(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDecl {
    pub kind: KeyKind,
    pub fields: Vec<Path>,
    /// `ON Type.field` or `ON Type.component.field`.
    pub target: Option<Path>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDecl {
    pub name: String,
    /// `Some` when a parameter list (possibly empty) was written.
    pub params: Option<Vec<Param>>,
    pub ty: Option<TypeExpr>,
    pub keys: Vec<KeyDecl>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RealizeBody {
    Stored,
    Expr(Expr),
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RealizeNames {
    All,
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlterAction {
    Add(ComponentDecl),
    Drop(String),
    Alter(ComponentDecl),
    AddKey(KeyDecl),
    Realize { names: RealizeNames, body: RealizeBody },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Declare { name: String, ty: TypeExpr },
    Assign { target: Expr, value: Expr },
    Insert { target: Expr, value: Expr },
    Delete { target: Expr, cond: Option<Expr> },
    Update { target: Expr, sets: Vec<(Path, Expr)>, cond: Option<Expr> },
    If { cond: Expr, then: Vec<Stmt>, els: Vec<Stmt> },
    DoWhile { body: Vec<Stmt>, cond: Expr },
    Return(Option<Expr>),
    Execute(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GlobalRealize {
    Stored,
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    DescribeTuple { name: String, attrs: Vec<(String, String)> },
    CreateClass { name: String, parents: Vec<String>, components: Vec<ComponentDecl>, keys: Vec<KeyDecl> },
    AlterClass { name: String, actions: Vec<AlterAction> },
    Drop(String),
    CreateGlobal { name: String, ty: TypeExpr, keys: Vec<KeyDecl>, realize: GlobalRealize },
    New { ty: String, args: Vec<Expr> },
    Destroy(Expr),
    Execute(Expr),
    Insert { target: Expr, value: Expr },
    Delete { target: Expr, cond: Option<Expr> },
    Update { target: Expr, sets: Vec<(Path, Expr)>, cond: Option<Expr> },
    Assign { target: Expr, value: Expr },
    Query(Expr),
    If { cond: Expr, then: Box<Command>, els: Option<Box<Command>> },
    Begin,
    Commit,
    Rollback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpannedCommand {
    pub span: Span,
    pub cmd: Command,
}
