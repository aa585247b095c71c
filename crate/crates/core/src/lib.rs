//! Local surrogate explanations for image classifiers: decision-tree
//! surrogates fitted on locality-weighted superpixel perturbations, a ridge
//! baseline, a random forest black box and IDX/Netpbm ingest.

pub mod error;
pub mod explainer;
pub mod ingest;
pub mod models;
pub mod representation;
pub mod sampling;
pub mod segmentation;
pub mod surrogate;

pub use error::{Error, Result};
