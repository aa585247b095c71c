//! Interpretable surrogates fitted on a perturbation database: weighted CART
//! regression trees and weighted ridge regression.

mod dot;
mod linear;
mod tree;

pub use dot::to_dot;
pub use linear::{fit_linear, fit_linear_on, LinearSurrogate};
pub use tree::{
    best_split, fit_tree, fit_tree_on, Split, SurrogateTree, TreeNode, TreeParams, GAIN_EPSILON,
    MIN_LEAF_WEIGHT_FRACTION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::BinaryInstance;
use crate::sampling::PerturbationSet;

/// Borrowed view of weighted binary regression data.
#[derive(Debug, Clone)]
pub struct WeightedData<'a> {
    pub rows: Vec<&'a [bool]>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    pub num_features: usize,
}

impl<'a> WeightedData<'a> {
    pub fn new(
        rows: Vec<&'a [bool]>,
        targets: Vec<f64>,
        weights: Vec<f64>,
        num_features: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Surrogate(
                "cannot fit a surrogate on zero samples".into(),
            ));
        }
        if rows.len() != targets.len() || rows.len() != weights.len() {
            return Err(Error::Surrogate(format!(
                "{} rows, {} targets and {} weights",
                rows.len(),
                targets.len(),
                weights.len()
            )));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != num_features) {
            return Err(Error::Surrogate(format!(
                "row {r} does not have {num_features} features"
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Surrogate(format!(
                "weight {} at row {i} is not positive",
                weights[i]
            )));
        }
        if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::Surrogate(format!("target at row {i} is not finite")));
        }
        Ok(WeightedData {
            rows,
            targets,
            weights,
            num_features,
        })
    }

    pub fn from_set(z: &'a PerturbationSet) -> Result<Self> {
        WeightedData::new(
            z.records.iter().map(|r| r.zprime.bits()).collect(),
            z.targets(),
            z.weights(),
            z.num_features,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Copy with weights rescaled to sum to one.
    pub(crate) fn normalized(&self) -> WeightedData<'a> {
        let total = self.total_weight();
        WeightedData {
            rows: self.rows.clone(),
            targets: self.targets.clone(),
            weights: self.weights.iter().map(|w| w / total).collect(),
            num_features: self.num_features,
        }
    }
}

/// Weighted variance `sum w (y - mean_w)^2 / sum w`.
pub fn weighted_variance(targets: &[f64], weights: &[f64]) -> Result<f64> {
    if targets.is_empty() || targets.len() != weights.len() {
        return Err(Error::Surrogate(format!(
            "weighted_variance needs equal non-empty inputs, got {} targets and {} weights",
            targets.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Surrogate("total weight must be positive".into()));
    }
    let mean = targets.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total;
    Ok(targets
        .iter()
        .zip(weights)
        .map(|(y, w)| w * (y - mean).powi(2))
        .sum::<f64>()
        / total)
}

/// Either surrogate family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateModel {
    Tree(SurrogateTree),
    Linear(LinearSurrogate),
}

impl SurrogateModel {
    pub fn predict(&self, zprime: &BinaryInstance) -> Result<f64> {
        match self {
            SurrogateModel::Tree(t) => t.predict(zprime),
            SurrogateModel::Linear(m) => m.predict(zprime),
        }
    }
}
