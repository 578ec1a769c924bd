use std::io;

/// Errors produced anywhere in the layer-assignment search stack.
#[derive(Debug, thiserror::Error)]
pub enum LasError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LasError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LasError::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        LasError::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        LasError::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, LasError>;
