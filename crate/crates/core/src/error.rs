use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown provision {0}")]
    UnknownProvision(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("embedding not found for content hash {hash:016x}")]
    EmbeddingNotFound { hash: u64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("store corrupt at byte offset {offset}: {message}")]
    CorruptStore { offset: u64, message: String },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("undefined similarity: zero vector")]
    ZeroVector,

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("class {0} has no training examples")]
    MissingClass(String),

    #[error("transport error{}: {message}", if *.retryable { " (retryable)" } else { "" })]
    Transport { message: String, retryable: bool },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of an external service (embedding or translation
    /// endpoint) as opposed to bad local data.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
