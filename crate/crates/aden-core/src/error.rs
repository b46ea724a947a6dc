//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape or dimension mismatch between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid model or run configuration; the message names the
    /// violated key or invariant.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset parsing or content problem.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint format, version, or consistency problem.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
