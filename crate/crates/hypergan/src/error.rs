//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A value outside its documented domain (sizes, hyperparameters, ids).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Malformed input file contents.
    #[error("format error: {0}")]
    Format(String),

    /// A sampler could not produce a valid draw within its retry budget.
    #[error("sampling exhausted: {0}")]
    SamplingExhausted(String),

    /// Non-finite values where finite numbers are required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Checkpoint cannot be read or does not match the current data/config.
    #[error("checkpoint version error: {0}")]
    Checkpoint(String),

    /// Bad configuration key or value.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 I/O, 3 numerical/sampling.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 1,
            Error::Io(_) | Error::Format(_) | Error::Checkpoint(_) | Error::Json(_) => 2,
            Error::Numerical(_) | Error::Shape(_) | Error::SamplingExhausted(_) => 3,
        }
    }
}
