use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HedgeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected} actions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("precondition violated: {0}")]
    Domain(String),
    #[error("{0}")]
    NotFound(String),
}

pub type Result<T, E = HedgeError> = std::result::Result<T, E>;
