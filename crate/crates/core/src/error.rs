use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse {field} value {value:?}")]
    Parse { field: &'static str, value: String },

    #[error("{0}")]
    Domain(String),

    #[error("invalid record {id:?}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model document version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("invalid model document: {0}")]
    InvalidModel(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the error (or anything it wraps) is a training divergence.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } => true,
            Error::Fold { source, .. } | Error::Context { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
