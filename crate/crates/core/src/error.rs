use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensor ops, encoders, data formats and the training harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Arguments violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// On-disk data is malformed. `offset` is the byte offset where parsing
    /// failed, when known.
    #[error("format error: {message}{}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        message: String,
        offset: Option<u64>,
    },

    /// Training produced a non-finite loss; `batch` identifies the offending batch.
    #[error("non-finite loss on batch {batch}: {detail}")]
    NonFiniteLoss { batch: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn format(msg: impl Into<String>, offset: Option<u64>) -> Self {
        Error::Format {
            message: msg.into(),
            offset,
        }
    }
}
