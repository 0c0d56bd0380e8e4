use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data (malformed values, violated preconditions on data).
    #[error("invalid input: {0}")]
    Input(String),

    /// Parse failure in a text file, with the 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Numerical failure (singular matrix, failed square root, degenerate
    /// geometry).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Wraps a numerical error with frame/track context from the caller.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::Numerical(msg) => Error::Numerical(format!("{context}: {msg}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
