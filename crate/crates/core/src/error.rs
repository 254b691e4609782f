use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate embedding: pre-normalization output is the zero vector")]
    DegenerateEmbedding,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient statistics: {label} population has {count} samples, need at least 2")]
    InsufficientStatistics { label: &'static str, count: usize },

    #[error("need at least {needed} identities, dataset has {available}")]
    TooFewIdentities { needed: usize, available: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("outer classifier needs both classes in its training pairs")]
    SingleClass,

    #[error(
        "domains too misaligned: every batch of epoch {epoch} ({batches} batches) produced zero \
         target pairs; the source mining windows locate no target distances"
    )]
    Misalignment { epoch: usize, batches: usize },

    #[error("model document: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an I/O failure with the path it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
