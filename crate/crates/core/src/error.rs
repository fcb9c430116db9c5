use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KtlError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient negatives: wanted {wanted}, only {available} valid candidates")]
    InsufficientNegatives { wanted: usize, available: usize },

    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty target chunk set: curriculum filter would discard every triple")]
    EmptyTargetChunks,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KtlError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KtlError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = KtlError> = std::result::Result<T, E>;
