use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch{}: {reason}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Dimension { layer: Option<usize>, reason: String },

    #[error("invalid temperature {0}: must be > 0")]
    InvalidTemperature(f32),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid network structure: {0}")]
    Structure(String),

    #[error("incomplete ensemble: student {0} is missing")]
    IncompleteEnsemble(usize),

    #[error("invalid upgrade: {0}")]
    InvalidUpgrade(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("protocol error at byte {offset}: {reason}")]
    Protocol { offset: usize, reason: String },

    #[error("inference failed on worker {worker}: {reason}")]
    Inference { worker: String, reason: String },

    #[error("worker {0} unreachable")]
    Unreachable(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(reason: impl Into<String>) -> Self {
        Error::Dimension {
            layer: None,
            reason: reason.into(),
        }
    }

    pub(crate) fn dim_at(layer: usize, reason: impl Into<String>) -> Self {
        Error::Dimension {
            layer: Some(layer),
            reason: reason.into(),
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
