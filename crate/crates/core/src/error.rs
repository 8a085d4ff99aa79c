use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum DotError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("frame index out of range: {index} (video has {len} frames)")]
    Index { index: usize, len: usize },
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("no track is visible at source frame {0}")]
    NoVisibleTracks(usize),
    #[error("tracker contract violated: {0}")]
    Contract(String),
    #[error("configuration mismatch: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("empty supervision set")]
    NoSupervision,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, DotError>;

impl DotError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DotError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DotError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
