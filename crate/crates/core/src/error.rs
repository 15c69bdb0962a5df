use thiserror::Error;

/// Errors raised by instance handling, generators and the allocation algorithms.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },

    #[error("item index {index} out of range for {m} items")]
    ItemOutOfRange { index: usize, m: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid value `{0}`: expected a fraction p/q or an exact decimal")]
    BadValueToken(String),

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty menu")]
    EmptyMenu,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown theorem id `{0}`")]
    UnknownTheorem(String),

    #[error("theorem `{theorem}` requires parameter `{param}`")]
    MissingParameter { theorem: String, param: String },

    #[error("infeasible generator spec: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("swap family is not laminar: {0}")]
    NotLaminar(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
