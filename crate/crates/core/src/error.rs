use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum SigError {
    /// Two objects that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument lies outside the domain of the operation.
    #[error("invalid input: {0}")]
    Domain(String),

    /// A numerical computation produced a non-finite value.
    #[error("numerical overflow: {0}")]
    Overflow(String),

    /// Malformed text input (CSV, JSON, model files).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = SigError> = std::result::Result<T, E>;

impl SigError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        SigError::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SigError::Domain(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        SigError::Parse(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SigError::Io {
            path: path.into(),
            source,
        }
    }
}
