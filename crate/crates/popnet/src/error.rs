//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments, malformed files, dimension mismatches.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Structurally valid input that cannot be processed (constant columns,
    /// too few observations, empty groups).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Numerical failure: singular matrices, exhausted redraws.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
