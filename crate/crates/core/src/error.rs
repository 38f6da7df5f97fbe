use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation (non-finite logits, T <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A value violated a type contract (probabilities off the simplex, label out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid hyperparameters or configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Invalid call pattern: empty inputs, mismatched lengths, bad shapes.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
