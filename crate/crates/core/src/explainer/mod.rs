//! End-to-end local explanations.
//!
//! [`explain_tree`] builds the perturbation database once and then fits
//! trees of increasing maximum depth until the surrogate reproduces the
//! black-box probability at the instance within `delta`, or the depth limit
//! is reached. [`explain_linear`] fits the ridge baseline on the same
//! database, and [`compare`] runs both on one shared database.

mod batch;
mod mask;
mod report;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use batch::{compare_batch, derive_seed, BatchInstance};
pub use mask::explanation_mask;
pub use report::{Aggregate, BatchReport, BatchRow, ComparisonReport, MethodOutcome};

use crate::error::{Error, Result};
use crate::models::{predict_checked, Predictor};
use crate::representation::{BinaryInstance, Image, MaskFill, SegmentMap};
use crate::sampling::{build_database, KernelConfig, PerturbationSet, SamplingParams};
use crate::surrogate::{fit_linear, fit_tree, SurrogateModel, SurrogateTree, TreeParams};

pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

/// Which class probability the surrogate regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetLabel {
    #[default]
    AutoTop1,
    Class(usize),
}

impl FromStr for TargetLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" | "auto-top1" => Ok(TargetLabel::AutoTop1),
            other => other.parse().map(TargetLabel::Class).map_err(|_| {
                Error::config(format!("label must be 'auto' or a class id, got '{other}'"))
            }),
        }
    }
}

impl fmt::Display for TargetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetLabel::AutoTop1 => f.write_str("auto-top1"),
            TargetLabel::Class(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for TargetLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TargetLabel::AutoTop1 => serializer.serialize_str("auto-top1"),
            TargetLabel::Class(k) => serializer.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TargetLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Id(k) => Ok(TargetLabel::Class(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub n_samples: usize,
    pub max_depth: usize,
    /// Accept the first depth whose prediction error is below this threshold.
    pub delta: f64,
    pub kernel: KernelConfig,
    pub keep_prob: f64,
    pub seed: u64,
    pub target_label: TargetLabel,
    pub ridge_lambda: f64,
    pub min_leaf_weight: Option<f64>,
    pub mask_fill: MaskFill,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            n_samples: 1000,
            max_depth: 5,
            delta: 0.05,
            kernel: KernelConfig::default(),
            keep_prob: 0.5,
            seed: 0,
            target_label: TargetLabel::AutoTop1,
            ridge_lambda: 0.01,
            min_leaf_weight: None,
            mask_fill: MaskFill::SegmentMean,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::config("max_depth must be at least 1"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::config(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::config(format!(
                "ridge_lambda must be >= 0, got {}",
                self.ridge_lambda
            )));
        }
        self.sampling_params().validate()
    }

    pub fn sampling_params(&self) -> SamplingParams {
        SamplingParams {
            n_samples: self.n_samples,
            kernel: self.kernel,
            keep_prob: self.keep_prob,
            seed: self.seed,
            mask_fill: self.mask_fill,
            ..SamplingParams::default()
        }
    }

    fn tree_params(&self, max_depth: usize) -> TreeParams {
        TreeParams {
            max_depth,
            min_leaf_weight: self.min_leaf_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationKind {
    Tree,
    Linear,
}

/// One iteration of the depth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthStep {
    pub max_depth: usize,
    pub depth: usize,
    pub gx: f64,
    pub error: f64,
    pub weighted_sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub schema_version: u32,
    pub kind: ExplanationKind,
    pub model: SurrogateModel,
    pub target_label: usize,
    /// Black-box probability of the target label on the original instance.
    pub fx: f64,
    /// Surrogate output on the all-present binary instance.
    pub gx: f64,
    pub prediction_error: f64,
    /// Seconds spent fitting surrogates, excluding sampling.
    pub fit_time: f64,
    pub depth_used: Option<usize>,
    pub depth_trace: Vec<DepthStep>,
    pub sigma_used: f64,
    pub segment_map_ref: String,
    pub config_echo: ExplainerConfig,
}

impl Explanation {
    pub fn tree(&self) -> Option<&SurrogateTree> {
        match &self.model {
            SurrogateModel::Tree(t) => Some(t),
            SurrogateModel::Linear(_) => None,
        }
    }

    /// Segments highlighted in the mask overlay. For trees: the features on
    /// the instance's own decision path, then the remaining split features in
    /// pre-order. For linear models: positively weighted features, strongest
    /// first, at most five.
    pub fn mask_features(&self) -> Vec<usize> {
        match &self.model {
            SurrogateModel::Tree(t) => {
                let mut order: Vec<usize> = t
                    .decision_path(&BinaryInstance::ones(t.num_features))
                    .into_iter()
                    .map(|(f, _)| f)
                    .collect();
                for f in t.split_features() {
                    if !order.contains(&f) {
                        order.push(f);
                    }
                }
                order
            }
            SurrogateModel::Linear(m) => {
                let mut positive: Vec<(usize, f64)> = m
                    .coefficients
                    .iter()
                    .copied()
                    .enumerate()
                    .filter(|(_, c)| *c > 0.0)
                    .collect();
                positive.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                positive.into_iter().take(5).map(|(f, _)| f).collect()
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Local fidelity `|f(x) - g(x')|`.
pub fn prediction_error(fx: f64, gx: f64) -> f64 {
    (fx - gx).abs()
}

/// The `k` most probable classes, descending, ties broken by lower class id.
pub fn top_labels<P: Predictor + ?Sized>(f: &P, x: &Image, k: usize) -> Result<Vec<(usize, f64)>> {
    let probs = predict_checked(f, std::slice::from_ref(x))?.remove(0);
    rank_labels(&probs, k)
}

pub(crate) fn rank_labels(probs: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > probs.len() {
        return Err(Error::config(format!(
            "cannot take top {k} of {} classes",
            probs.len()
        )));
    }
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

/// Resolves the target label and returns it with `f(x)` for that label.
pub fn resolve_target<P: Predictor + ?Sized>(
    f: &P,
    x: &Image,
    target: TargetLabel,
) -> Result<(usize, f64)> {
    let probs = predict_checked(f, std::slice::from_ref(x))?.remove(0);
    let label = match target {
        TargetLabel::AutoTop1 => rank_labels(&probs, 1)?[0].0,
        TargetLabel::Class(k) if k < probs.len() => k,
        TargetLabel::Class(k) => {
            return Err(Error::config(format!(
                "label {k} out of range for {} classes",
                probs.len()
            )))
        }
    };
    Ok((label, probs[label]))
}

fn seconds(start: Instant) -> f64 {
    (start.elapsed().as_secs_f64() * 1e6).round() / 1e6
}

/// Samples the database for `x` under `cfg` and returns it with `f(x)`.
pub fn sample_for<P: Predictor + ?Sized>(
    x: &Image,
    seg: &SegmentMap,
    f: &P,
    cfg: &ExplainerConfig,
) -> Result<(PerturbationSet, f64)> {
    cfg.validate()?;
    let (label, fx) = resolve_target(f, x, cfg.target_label)?;
    let z = build_database(x, seg, f, label, &cfg.sampling_params())?;
    Ok((z, fx))
}

pub fn explain_tree<P: Predictor + ?Sized>(
    x: &Image,
    seg: &SegmentMap,
    f: &P,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let (z, fx) = sample_for(x, seg, f, cfg)?;
    explain_tree_from_set(&z, fx, cfg, &seg.content_hash())
}

/// Depth search on an existing database.
pub fn explain_tree_from_set(
    z: &PerturbationSet,
    fx: f64,
    cfg: &ExplainerConfig,
    segment_map_ref: &str,
) -> Result<Explanation> {
    cfg.validate()?;
    let instance = BinaryInstance::ones(z.num_features);
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut fitted = Vec::new();
    for max_depth in 1..=cfg.max_depth {
        let tree = fit_tree(z, &cfg.tree_params(max_depth))?;
        let gx = tree.predict(&instance)?;
        let error = prediction_error(fx, gx);
        let saturated = tree.depth < max_depth;
        trace.push(DepthStep {
            max_depth,
            depth: tree.depth,
            gx,
            error,
            weighted_sse: 0.0,
        });
        fitted.push(tree);
        if error < cfg.delta || saturated {
            break;
        }
    }
    let fit_time = seconds(start);
    // SSE is bookkeeping for the trace and stays outside the timed region.
    for (step, tree) in trace.iter_mut().zip(&fitted) {
        step.weighted_sse = tree.weighted_sse(z)?;
    }
    let tree = fitted.pop().expect("max_depth >= 1 fits at least one tree");
    let last = trace.last().expect("non-empty trace");
    Ok(Explanation {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        kind: ExplanationKind::Tree,
        target_label: z.target_label,
        fx,
        gx: last.gx,
        prediction_error: last.error,
        fit_time,
        depth_used: Some(tree.depth),
        depth_trace: trace,
        sigma_used: z.sigma_used,
        segment_map_ref: segment_map_ref.to_string(),
        config_echo: cfg.clone(),
        model: SurrogateModel::Tree(tree),
    })
}

pub fn explain_linear<P: Predictor + ?Sized>(
    x: &Image,
    seg: &SegmentMap,
    f: &P,
    cfg: &ExplainerConfig,
) -> Result<Explanation> {
    let (z, fx) = sample_for(x, seg, f, cfg)?;
    explain_linear_from_set(&z, fx, cfg, &seg.content_hash())
}

pub fn explain_linear_from_set(
    z: &PerturbationSet,
    fx: f64,
    cfg: &ExplainerConfig,
    segment_map_ref: &str,
) -> Result<Explanation> {
    cfg.validate()?;
    let start = Instant::now();
    let model = fit_linear(z, cfg.ridge_lambda)?;
    let gx = model.predict(&BinaryInstance::ones(z.num_features))?;
    let fit_time = seconds(start);
    Ok(Explanation {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        kind: ExplanationKind::Linear,
        target_label: z.target_label,
        fx,
        gx,
        prediction_error: prediction_error(fx, gx),
        fit_time,
        depth_used: None,
        depth_trace: Vec::new(),
        sigma_used: z.sigma_used,
        segment_map_ref: segment_map_ref.to_string(),
        config_echo: cfg.clone(),
        model: SurrogateModel::Linear(model),
    })
}

/// Both explanations for `x`, fitted on one shared perturbation database.
pub fn compare<P: Predictor + ?Sized>(
    x: &Image,
    seg: &SegmentMap,
    f: &P,
    cfg: &ExplainerConfig,
) -> Result<(ComparisonReport, Explanation, Explanation)> {
    let (z, fx) = sample_for(x, seg, f, cfg)?;
    compare_from_set(&z, fx, cfg, &seg.content_hash())
}

pub fn compare_from_set(
    z: &PerturbationSet,
    fx: f64,
    cfg: &ExplainerConfig,
    segment_map_ref: &str,
) -> Result<(ComparisonReport, Explanation, Explanation)> {
    let tree = explain_tree_from_set(z, fx, cfg, segment_map_ref)?;
    let linear = explain_linear_from_set(z, fx, cfg, segment_map_ref)?;
    let report = ComparisonReport::from_explanations(z, &tree, &linear)?;
    Ok((report, tree, linear))
}
