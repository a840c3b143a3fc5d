use thiserror::Error;

use crate::structure::Elem;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("structures disagree on constant `{0}`")]
    NotCompatible(String),
    #[error("structures share tuples of relation `{0}`")]
    NotLocallyDisjoint(String),
    #[error("signatures differ")]
    SignatureMismatch,
    #[error("conflicting declarations for symbol `{0}`")]
    SignatureConflict(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("constant `{0}` has no value")]
    MissingConstant(String),
    #[error("`{symbol}` expects {expected} arguments, got {found}")]
    ArityMismatch { symbol: String, expected: usize, found: usize },
    #[error("port value {0} already belongs to the guard relation")]
    PortClash(Elem),
    #[error("signature has no guard relation")]
    MissingGuard,
    #[error("edge endpoint {0} is not a vertex")]
    DanglingEdge(Elem),
    #[error("support of size {size} exceeds the bound {bound}")]
    SupportTooLarge { size: usize, bound: usize },
    #[error("carrier of size {size} exceeds the cutoff {cutoff}")]
    CarrierTooLarge { size: usize, cutoff: usize },
    #[error("rank {rank} exceeds the bound {bound}")]
    RankTooLarge { rank: usize, bound: usize },
    #[error("sentence rank {formula} exceeds type rank {rank}")]
    RankMismatch { formula: usize, rank: usize },
    #[error("type is not registered")]
    UnregisteredType,
    #[error("hint for `{var}` has arity {found}, expected {expected}")]
    HintArityMismatch { var: String, expected: usize, found: usize },
    #[error("rule for `{0}` equates distinct variables")]
    NotNormalized(String),
    #[error("decomposition width exceeds {0}")]
    WidthExceeded(i64),
    #[error("decomposition is not reduced: {0}")]
    NotReduced(String),
    #[error("guard relation does not match the decomposition: {0}")]
    GuardMismatch(String),
    #[error("guard precondition violated: {0}")]
    GuardViolation(String),
    #[error("derivation is not for the expected predicate: {0}")]
    BadDerivation(String),
    #[error("more than {0} reachable types")]
    TypeBlowup(usize),
    #[error("enumeration bounds too large: {0}")]
    BoundsTooLarge(String),
    #[error("too many tuples ({0}); at most 64 are supported")]
    TooManyTuples(usize),
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}
