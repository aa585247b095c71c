use serde::{Deserialize, Serialize};

use super::WeightedData;
use crate::error::{Error, Result};
use crate::representation::BinaryInstance;
use crate::sampling::PerturbationSet;

/// Smallest weighted-SSE reduction accepted as a split, and the slack within
/// which two gains count as tied. Gains are measured with weights normalised
/// to sum to one.
pub const GAIN_EPSILON: f64 = 1e-12;

/// Default minimum child weight as a fraction of the total weight.
pub const MIN_LEAF_WEIGHT_FRACTION: f64 = 1e-6;

/// Regression tree node. Feature bits route `0` left and `1` right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        /// Weighted SSE reduction of this split, in the scale of the input weights.
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        weight_sum: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn visit_internal<'a>(&'a self, out: &mut Vec<(usize, f64)>) {
        if let TreeNode::Internal {
            feature,
            gain,
            left,
            right,
        } = self
        {
            out.push((*feature, *gain));
            left.visit_internal(out);
            right.visit_internal(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTree {
    pub root: TreeNode,
    pub depth: usize,
    pub num_features: usize,
    /// Share of the total split gain attributed to each feature.
    pub feature_importances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total weight of each child; defaults to
    /// `MIN_LEAF_WEIGHT_FRACTION * total weight`.
    pub min_leaf_weight: Option<f64>,
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeParams {
            max_depth,
            min_leaf_weight: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub gain: f64,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    wy: f64,
    wyy: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, w: f64, y: f64) {
        self.w += w;
        self.wy += w * y;
        self.wyy += w * y * y;
        self.n += 1;
    }

    fn minus(&self, other: &Stats) -> Stats {
        Stats {
            w: self.w - other.w,
            wy: self.wy - other.wy,
            wyy: self.wyy - other.wyy,
            n: self.n - other.n,
        }
    }

    /// Weighted sum of squared deviations from the weighted mean.
    fn sse(&self) -> f64 {
        if self.w <= 0.0 {
            0.0
        } else {
            (self.wyy - self.wy * self.wy / self.w).max(0.0)
        }
    }
}

fn node_stats(data: &WeightedData<'_>, samples: &[usize]) -> Stats {
    let mut s = Stats::default();
    for &i in samples {
        s.add(data.weights[i], data.targets[i]);
    }
    s
}

/// Best presence/absence split of `samples` among `allowed` features.
///
/// The gain of splitting on `k` is the reduction of weighted SSE. Candidates
/// whose children would be empty or lighter than `min_leaf_weight` are
/// skipped; gains within [`GAIN_EPSILON`] of each other resolve to the lower
/// feature id; `None` when no candidate gains more than [`GAIN_EPSILON`].
pub fn best_split(
    data: &WeightedData<'_>,
    samples: &[usize],
    allowed: &[usize],
    min_leaf_weight: f64,
) -> Option<Split> {
    let parent = node_stats(data, samples);
    let parent_sse = parent.sse();
    let mut features = allowed.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    for &k in &features {
        let mut right = Stats::default();
        for &i in samples {
            if data.rows[i][k] {
                right.add(data.weights[i], data.targets[i]);
            }
        }
        let left = parent.minus(&right);
        if left.n == 0 || right.n == 0 || left.w < min_leaf_weight || right.w < min_leaf_weight {
            continue;
        }
        let gain = parent_sse - left.sse() - right.sse();
        if gain <= GAIN_EPSILON {
            continue;
        }
        if best.map_or(true, |b| gain > b.gain + GAIN_EPSILON) {
            best = Some(Split { feature: k, gain });
        }
    }
    best
}

struct Builder<'d, 'a> {
    data: &'d WeightedData<'a>,
    original_weights: &'d [f64],
    scale: f64,
    max_depth: usize,
    min_leaf_weight: f64,
    all_features: Vec<usize>,
}

impl Builder<'_, '_> {
    fn build(&self, samples: Vec<usize>, depth: usize) -> TreeNode {
        let split = if depth < self.max_depth {
            best_split(
                self.data,
                &samples,
                &self.all_features,
                self.min_leaf_weight,
            )
        } else {
            None
        };
        match split {
            Some(Split { feature, gain }) => {
                let (right, left): (Vec<usize>, Vec<usize>) = samples
                    .into_iter()
                    .partition(|&i| self.data.rows[i][feature]);
                TreeNode::Internal {
                    feature,
                    gain: gain * self.scale,
                    left: Box::new(self.build(left, depth + 1)),
                    right: Box::new(self.build(right, depth + 1)),
                }
            }
            None => {
                let s = node_stats(self.data, &samples);
                TreeNode::Leaf {
                    value: s.wy / s.w,
                    weight_sum: samples.iter().map(|&i| self.original_weights[i]).sum(),
                    n_samples: samples.len(),
                }
            }
        }
    }
}

/// Greedy weighted CART on the database's binary features.
pub fn fit_tree(z: &PerturbationSet, params: &TreeParams) -> Result<SurrogateTree> {
    fit_tree_on(&WeightedData::from_set(z)?, params)
}

pub fn fit_tree_on(data: &WeightedData<'_>, params: &TreeParams) -> Result<SurrogateTree> {
    if params.max_depth == 0 {
        return Err(Error::config("max_depth must be at least 1"));
    }
    let total = data.total_weight();
    let min_leaf_weight = match params.min_leaf_weight {
        None => MIN_LEAF_WEIGHT_FRACTION,
        Some(m) if m >= 0.0 => m / total,
        Some(m) => {
            return Err(Error::config(format!(
                "min_leaf_weight must be >= 0, got {m}"
            )))
        }
    };
    let normalized = data.normalized();
    let builder = Builder {
        data: &normalized,
        original_weights: &data.weights,
        scale: total,
        max_depth: params.max_depth,
        min_leaf_weight,
        all_features: (0..data.num_features).collect(),
    };
    let root = builder.build((0..data.len()).collect(), 0);
    SurrogateTree::from_root(root, data.num_features)
}

impl SurrogateTree {
    /// Wraps a node tree, deriving its depth and feature importances.
    pub fn from_root(root: TreeNode, num_features: usize) -> Result<Self> {
        let mut splits = Vec::new();
        root.visit_internal(&mut splits);
        let mut importances = vec![0.0; num_features];
        for &(feature, gain) in &splits {
            if feature >= num_features {
                return Err(Error::Surrogate(format!(
                    "split on feature {feature} of {num_features}"
                )));
            }
            if !(gain >= 0.0) {
                return Err(Error::Surrogate(format!("split gain {gain} is negative")));
            }
            importances[feature] += gain;
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Ok(SurrogateTree {
            depth: root.depth(),
            root,
            num_features,
            feature_importances: importances,
        })
    }

    pub fn predict(&self, zprime: &BinaryInstance) -> Result<f64> {
        if zprime.len() != self.num_features {
            return Err(Error::dim(format!(
                "tree expects {} features, got {}",
                self.num_features,
                zprime.len()
            )));
        }
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return Ok(*value),
                TreeNode::Internal {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    node = if zprime.bit(*feature) { right } else { left };
                }
            }
        }
    }

    /// `(feature, bit)` pairs tested on the way from the root to `zprime`'s leaf.
    pub fn decision_path(&self, zprime: &BinaryInstance) -> Vec<(usize, bool)> {
        let mut path = Vec::new();
        let mut node = &self.root;
        while let TreeNode::Internal {
            feature,
            left,
            right,
            ..
        } = node
        {
            let bit = zprime.bits().get(*feature).copied().unwrap_or(false);
            path.push((*feature, bit));
            node = if bit { right } else { left };
        }
        path
    }

    /// Distinct split features in pre-order.
    pub fn split_features(&self) -> Vec<usize> {
        let mut splits = Vec::new();
        self.root.visit_internal(&mut splits);
        let mut seen = Vec::new();
        for (f, _) in splits {
            if !seen.contains(&f) {
                seen.push(f);
            }
        }
        seen
    }

    /// Weighted sum of squared residuals over a database.
    pub fn weighted_sse(&self, z: &PerturbationSet) -> Result<f64> {
        z.records.iter().try_fold(0.0, |acc, r| {
            let g = self.predict(&r.zprime)?;
            Ok(acc + r.weight * (r.fz - g).powi(2))
        })
    }
}
