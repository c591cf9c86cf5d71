use std::path::PathBuf;

use thiserror::Error;

use crate::net::ParamName;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by layer {layer} ({kind})")]
    NumericFailure { layer: usize, kind: String },

    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),

    #[error("non-finite loss or gradient in batch {batch}: {source}")]
    BatchFailure {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("activation cache does not match this model: {0}")]
    CacheMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("unsupported model file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("parameter {layer}.{name} not found")]
    MissingParam { layer: usize, name: ParamName },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
