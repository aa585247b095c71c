use thiserror::Error;

use crate::ingest::IngestError;
use crate::models::PredictError;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error. Each variant is tagged with the subsystem that raised it
/// so that command-line callers can map it to an exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),

    #[error("representation: {0}")]
    Dimension(String),

    #[error("config: {0}")]
    InvalidConfig(String),

    #[error("segmentation: {0}")]
    Segmentation(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("sampling: predictor failed on sample {index}: {source}")]
    PredictorFailed {
        index: usize,
        #[source]
        source: PredictError,
    },

    #[error("model: {0}")]
    Predictor(#[from] PredictError),

    #[error("surrogate: {0}")]
    Surrogate(String),

    #[error("model: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True when the error originates in the external-predictor wire protocol.
    pub fn is_protocol(&self) -> bool {
        match self {
            Error::PredictorFailed { source, .. } | Error::Predictor(source) => {
                source.is_protocol()
            }
            _ => false,
        }
    }
}
