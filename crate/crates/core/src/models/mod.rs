//! Black-box classifiers that can be explained.
//!
//! Everything the explainer knows about a model goes through [`Predictor`]:
//! a batch of images in, one probability vector per image out.

mod external;
mod forest;
pub mod metrics;

use thiserror::Error;

use crate::representation::Image;

pub use external::{
    serve_predictor, ExternalConfig, ExternalPredictor, ProtocolError, Request, Response,
};
pub use forest::{
    ClassNode, ClassificationTree, ForestParams, RandomForestModel, MODEL_FORMAT_VERSION,
};

/// Maximum allowed deviation of a probability vector's sum from 1.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("input shape mismatch: {0}")]
    Shape(String),

    #[error("predictor returned {got} outputs for a batch of {expected}")]
    BatchSize { expected: usize, got: usize },

    #[error("output {index} violates the probability contract: {reason} (payload: {payload})")]
    Contract {
        index: usize,
        reason: String,
        payload: String,
    },

    #[error("external predictor: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("{0}")]
    Other(String),
}

impl PredictError {
    pub fn is_protocol(&self) -> bool {
        matches!(self, PredictError::Protocol(_))
    }
}

/// A probabilistic image classifier.
///
/// Implementations must be stateless from the caller's point of view: the same
/// input always yields the same output, and concurrent calls are allowed.
pub trait Predictor: Send + Sync {
    fn num_classes(&self) -> usize;

    fn predict_proba(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>, PredictError>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict_proba(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>, PredictError> {
        (**self).predict_proba(batch)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict_proba(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>, PredictError> {
        (**self).predict_proba(batch)
    }
}

/// Checks one probability vector against the contract. Returns the reason on failure.
pub fn check_distribution(probs: &[f64], num_classes: usize) -> Result<(), String> {
    if probs.len() != num_classes {
        return Err(format!(
            "expected {num_classes} probabilities, got {}",
            probs.len()
        ));
    }
    if let Some(p) = probs
        .iter()
        .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0 + PROBABILITY_SUM_TOLERANCE)
    {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(())
}

/// Calls `f` and enforces the probability contract on every returned vector.
pub fn predict_checked<P: Predictor + ?Sized>(
    f: &P,
    batch: &[Image],
) -> Result<Vec<Vec<f64>>, PredictError> {
    let out = f.predict_proba(batch)?;
    if out.len() != batch.len() {
        return Err(PredictError::BatchSize {
            expected: batch.len(),
            got: out.len(),
        });
    }
    let k = f.num_classes();
    for (index, probs) in out.iter().enumerate() {
        check_distribution(probs, k).map_err(|reason| PredictError::Contract {
            index,
            reason,
            payload: format!("{probs:?}"),
        })?;
    }
    Ok(out)
}

/// Adapts a per-image closure into a [`Predictor`].
pub struct FnPredictor<F> {
    num_classes: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&Image) -> Vec<f64> + Send + Sync,
{
    pub fn new(num_classes: usize, f: F) -> Self {
        FnPredictor { num_classes, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&Image) -> Vec<f64> + Send + Sync,
{
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_proba(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>, PredictError> {
        Ok(batch.iter().map(&self.f).collect())
    }
}
