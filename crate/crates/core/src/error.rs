use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis}: {detail}")]
    Shape {
        op: &'static str,
        axis: String,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: unsupported format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("{path}: malformed file: {detail}")]
    Malformed { path: PathBuf, detail: String },

    #[error("{path}: {detail}")]
    Validation { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, axis: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            axis: axis.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
