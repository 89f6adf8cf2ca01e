use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Persisted results were produced under a different configuration.
    #[error("digest mismatch in {}: expected {expected}, found {found}", path.display())]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    /// A sweep cell failed; carries the cell coordinates.
    #[error("sweep cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    /// The configuration model could not remove all self-loops and
    /// multi-edges within its swap budget.
    #[error("degree sequence repair gave up after {attempts} swap attempts ({remaining} bad edges left)")]
    RepairExhausted { attempts: usize, remaining: usize },

    /// Analysis needs the full decision history but the trajectory only kept rates.
    #[error("trajectory does not hold the full decision history")]
    MissingHistory,
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than by the runtime.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::DigestMismatch { .. } => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Cell { source, .. } => source.is_usage(),
            Error::RepairExhausted { .. } | Error::MissingHistory => false,
        }
    }
}
