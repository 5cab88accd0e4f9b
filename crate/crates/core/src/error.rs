use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AcdcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AcdcError {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numeric guard tripped in {op}: {detail}")]
    NumericGuard { op: &'static str, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<AcdcError>,
    },
}

impl AcdcError {
    pub(crate) fn dim(op: &'static str, expected: usize, actual: usize) -> Self {
        AcdcError::Dimension {
            op,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AcdcError::Io {
            path: path.into(),
            source,
        }
    }
}
