use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // relational kernel
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),
    #[error("attribute name collision: {0}")]
    AttrCollision(String),
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),

    // types and catalog
    #[error("duplicate name: {0}")]
    DuplicateName(String),
    #[error("unknown scalar type: {0}")]
    UnknownScalarType(String),
    #[error("unknown type: {0}")]
    UnknownType(String),
    #[error("unknown parent type: {0}")]
    UnknownParent(String),
    #[error("unknown component {component} of type {ty}")]
    UnknownComponent { ty: String, component: String },
    #[error("unknown key field: {0}")]
    KeyFieldUnknown(String),
    #[error("foreign key target is not a global key: {0}")]
    ForeignKeyTargetNotGlobal(String),
    #[error("cannot alter inherited component {0}")]
    CannotAlterInherited(String),
    #[error("realization kind does not match component {0}")]
    ImplKindMismatch(String),
    #[error("expression type error: {0}")]
    ExprTypeError(String),
    #[error("dependency cycle through {0}")]
    CycleDetected(String),
    #[error("ambiguous realization of {component} for type {ty}: {candidates:?}")]
    AmbiguousRealization { ty: String, component: String, candidates: Vec<String> },
    #[error("component {component} of type {ty} has no realization")]
    UnrealizedComponent { ty: String, component: String },
    #[error("type {ty} is in use: {reason}")]
    TypeInUse { ty: String, reason: String },
    #[error("unknown object identifier {0}")]
    UnknownOid(u64),

    // storage
    #[error("base variable already exists: {0}")]
    AlreadyExists(String),
    #[error("key violation: {0}")]
    KeyViolation(String),
    #[error("referential integrity violation: {0}")]
    RefIntegrityViolation(String),
    #[error("destroy vetoed, objects still referenced: {0}")]
    ReferentialVeto(String),
    #[error("constructor of {ty} expects {expected} arguments, got {got}")]
    CtorArityMismatch { ty: String, expected: usize, got: usize },

    // representation level
    #[error("unresolvable path at segment `{segment}` of {path}")]
    UnresolvablePath { path: String, segment: String },
    #[error("relation has no OID attribute")]
    NoOidAttribute,
    #[error("attribute {0} is not a reference")]
    NotARefAttribute(String),

    // compiler and execution
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("condition is not boolean: {0}")]
    NonBooleanCondition(String),
    #[error("not writable: {0}")]
    NotWritable(String),
    #[error("method {method} expects {expected} arguments, got {got}")]
    ArityMismatch { method: String, expected: usize, got: usize },
    #[error("loop exceeded {0} iterations")]
    LoopLimitExceeded(usize),
    #[error("call depth exceeded {0}")]
    CallDepthExceeded(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),

    // language
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },

    // sessions and persistence
    #[error("transaction error: {0}")]
    Transaction(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("dump format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("integrity check failed: {0}")]
    IntegrityCheckFailed(String),
}

impl Error {
    pub(crate) fn eval(msg: impl Into<String>) -> Self {
        Error::Evaluation(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
