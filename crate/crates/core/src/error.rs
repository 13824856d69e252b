use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the synthesis, solver and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("set is empty: {0}")]
    EmptySet(String),

    #[error("set is unbounded in the requested direction")]
    UnboundedSet,

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
