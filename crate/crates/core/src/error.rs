use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("{path}: {element}: {message}")]
    Parse {
        path: PathBuf,
        element: String,
        message: String,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: image codec error: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("external tool failed ({status}): {diagnostics}")]
    ExternalTool { status: String, diagnostics: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("non-finite loss at step {step}; last good checkpoint: {last_checkpoint:?}")]
    NonFiniteLoss {
        step: u64,
        last_checkpoint: Option<PathBuf>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Whether the error stems from the data on disk rather than from the
    /// caller's arguments or a runtime failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnsupportedFormat(_)
                | Error::Io { .. }
                | Error::Image { .. }
                | Error::MissingData(_)
                | Error::Checkpoint(_)
                | Error::Json(_)
        )
    }
}
