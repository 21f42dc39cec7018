use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the voxelview library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("viewpoint is (nearly) parallel to the up vector")]
    DegenerateUp,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(usize, usize),
    #[error("bad magic: expected VXV1")]
    BadMagic,
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("value out of range: {0}")]
    ValueOutOfRange(String),
    #[error("hypothesis list is empty")]
    EmptyHypotheses,
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("point cloud is degenerate (cross-covariance rank < 2)")]
    DegenerateCloud,
    #[error("mean viewpoint vanishes")]
    DegenerateMean,
    #[error("malformed input {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
