use thiserror::Error;

/// Errors produced by tensor ops, model construction and training.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid config: {0}")]
    Config(String),
    /// Malformed or corrupted weight file.
    #[error("weight file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DType { expected: &'static str, found: &'static str },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
