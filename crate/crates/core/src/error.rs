use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of paired inputs disagree (matrix vs vector lengths, etc.).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Inputs violate a documented precondition (non-finite values, empty
    /// collections, out-of-range parameters, infeasible configurations).
    #[error("validation error: {0}")]
    Validation(String),

    /// A record in an input file could not be parsed or failed validation.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
