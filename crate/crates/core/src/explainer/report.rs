use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prediction_error, Explanation, EXPLANATION_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::sampling::PerturbationSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub gx: f64,
    pub error: f64,
    pub fit_time: f64,
    pub depth_used: Option<usize>,
}

/// Tree against linear on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub target_label: usize,
    pub fx: f64,
    pub tree: MethodOutcome,
    pub linear: MethodOutcome,
    /// SHA-256 of the shared perturbation database, empty for injected rows.
    pub perturbation_digest: String,
    pub sigma_used: f64,
    pub n_samples: usize,
}

impl ComparisonReport {
    pub(crate) fn from_explanations(
        z: &PerturbationSet,
        tree: &Explanation,
        linear: &Explanation,
    ) -> Result<Self> {
        let outcome = |e: &Explanation| MethodOutcome {
            gx: e.gx,
            error: e.prediction_error,
            fit_time: e.fit_time,
            depth_used: e.depth_used,
        };
        Ok(ComparisonReport {
            schema_version: EXPLANATION_SCHEMA_VERSION,
            target_label: z.target_label,
            fx: tree.fx,
            tree: outcome(tree),
            linear: outcome(linear),
            perturbation_digest: hex::encode(Sha256::digest(z.to_json()?.as_bytes())),
            sigma_used: z.sigma_used,
            n_samples: z.len(),
        })
    }

    /// Builds a row from precomputed surrogate outputs.
    pub fn from_outputs(target_label: usize, fx: f64, tree_gx: f64, linear_gx: f64) -> Self {
        let outcome = |gx: f64| MethodOutcome {
            gx,
            error: prediction_error(fx, gx),
            fit_time: 0.0,
            depth_used: None,
        };
        ComparisonReport {
            schema_version: EXPLANATION_SCHEMA_VERSION,
            target_label,
            fx,
            tree: outcome(tree_gx),
            linear: outcome(linear_gx),
            perturbation_digest: String::new(),
            sigma_used: 0.0,
            n_samples: 0,
        }
    }

    pub fn tree_wins(&self) -> bool {
        self.tree.error < self.linear.error
    }

    pub fn tree_no_worse(&self) -> bool {
        self.tree.error <= self.linear.error
    }

    /// `fx | tree gx | tree error | linear gx | linear error`, four decimals.
    pub fn table_row(&self) -> String {
        format!(
            "{:.4} | {:.4} | {:.4} | {:.4} | {:.4}",
            self.fx, self.tree.gx, self.tree.error, self.linear.gx, self.linear.error
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub instance: String,
    pub seed: u64,
    pub num_segments: usize,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean_tree_error: f64,
    pub mean_linear_error: f64,
    /// Fraction of rows where the tree error is strictly lower.
    pub win_rate: f64,
    /// Fraction of rows where the tree error is lower or equal.
    pub no_worse_rate: f64,
    pub mean_tree_fit_time: f64,
    pub mean_linear_fit_time: f64,
}

impl Aggregate {
    pub fn from_reports<'a>(
        reports: impl IntoIterator<Item = &'a ComparisonReport>,
    ) -> Result<Self> {
        let reports: Vec<&ComparisonReport> = reports.into_iter().collect();
        if reports.is_empty() {
            return Err(Error::config("cannot aggregate an empty batch"));
        }
        let n = reports.len() as f64;
        let mean =
            |f: &dyn Fn(&ComparisonReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
        let rate = |f: &dyn Fn(&ComparisonReport) -> bool| {
            reports.iter().filter(|r| f(r)).count() as f64 / n
        };
        Ok(Aggregate {
            n: reports.len(),
            mean_tree_error: mean(&|r| r.tree.error),
            mean_linear_error: mean(&|r| r.linear.error),
            win_rate: rate(&|r| r.tree_wins()),
            no_worse_rate: rate(&|r| r.tree_no_worse()),
            mean_tree_fit_time: mean(&|r| r.tree.fit_time),
            mean_linear_fit_time: mean(&|r| r.linear.fit_time),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub rows: Vec<BatchRow>,
    pub aggregate: Aggregate,
}

impl BatchReport {
    pub fn new(rows: Vec<BatchRow>) -> Result<Self> {
        let aggregate = Aggregate::from_reports(rows.iter().map(|r| &r.report))?;
        Ok(BatchReport {
            schema_version: EXPLANATION_SCHEMA_VERSION,
            rows,
            aggregate,
        })
    }
}
