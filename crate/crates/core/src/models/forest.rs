use std::cmp::Ordering;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PredictError, Predictor};
use crate::error::{Error, Result};
use crate::representation::Image;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative slack used when comparing split scores, so that mathematically
/// tied candidates resolve by the tie-break order rather than by rounding.
const SCORE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features drawn per split; `None` means `ceil(sqrt(num_features))`.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 12,
            feature_subsample: None,
            bootstrap: true,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassNode {
    /// Samples with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

/// Gini CART classification tree stored as a flat node array with the root at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    nodes: Vec<ClassNode>,
}

struct TrainSet<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [usize],
    num_classes: usize,
}

struct Grower<'a, R> {
    data: &'a TrainSet<'a>,
    max_depth: usize,
    min_samples_split: usize,
    mtry: usize,
    num_features: usize,
    rng: &'a mut R,
    nodes: Vec<ClassNode>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let mut counts = vec![0u32; self.data.num_classes];
        for &i in samples.iter() {
            counts[self.data.labels[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let id = self.nodes.len();
        self.nodes.push(ClassNode::Leaf {
            counts: counts.clone(),
        });
        if pure || depth >= self.max_depth || samples.len() < self.min_samples_split {
            return id;
        }

        let features: Vec<usize> = if self.mtry >= self.num_features {
            (0..self.num_features).collect()
        } else {
            let mut f = index::sample(self.rng, self.num_features, self.mtry).into_vec();
            f.sort_unstable();
            f
        };
        let Some(best) = self.best_split(samples, &counts, &features) else {
            return id;
        };

        let rows = self.data.rows;
        let split_at = partition(samples, |&i| rows[i][best.feature] <= best.threshold);
        let (left_samples, right_samples) = samples.split_at_mut(split_at);
        let left = self.grow(left_samples, depth + 1);
        let right = self.grow(right_samples, depth + 1);
        self.nodes[id] = ClassNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(
        &self,
        samples: &[usize],
        counts: &[u32],
        features: &[usize],
    ) -> Option<Candidate> {
        let n = samples.len() as f64;
        let parent_score = sum_squares(counts) as f64 / n;
        let tol = SCORE_TOLERANCE * n;
        let mut best: Option<Candidate> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for &f in features {
            pairs.clear();
            pairs.extend(
                samples
                    .iter()
                    .map(|&i| (self.data.rows[i][f], self.data.labels[i])),
            );
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            let mut left = vec![0u32; counts.len()];
            let mut right = counts.to_vec();
            let (mut sl, mut sr) = (0u64, sum_squares(counts));
            for k in 0..pairs.len() - 1 {
                let c = pairs[k].1;
                sl += 2 * u64::from(left[c]) + 1;
                sr -= 2 * u64::from(right[c]) - 1;
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (pairs[k].0, pairs[k + 1].0);
                if a == b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let score = sl as f64 / nl + sr as f64 / (n - nl);
                if score <= parent_score + tol {
                    continue;
                }
                if best.as_ref().map_or(true, |b| score > b.score + tol) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(a, b),
                        score,
                    });
                }
            }
        }
        best
    }
}

fn sum_squares(counts: &[u32]) -> u64 {
    counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum()
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// In-place partition; returns the number of elements satisfying `pred`, which end up first.
fn partition<T, F: Fn(&T) -> bool>(items: &mut [T], pred: F) -> usize {
    let mut next = 0;
    for i in 0..items.len() {
        if pred(&items[i]) {
            items.swap(i, next);
            next += 1;
        }
    }
    next
}

impl ClassificationTree {
    fn fit<R: Rng>(
        data: &TrainSet<'_>,
        samples: &mut [usize],
        max_depth: usize,
        min_samples_split: usize,
        mtry: usize,
        rng: &mut R,
    ) -> Self {
        let num_features = data.rows.first().map_or(0, |r| r.len());
        let mut grower = Grower {
            data,
            max_depth,
            min_samples_split: min_samples_split.max(2),
            mtry,
            num_features,
            rng,
            nodes: Vec::new(),
        };
        grower.grow(samples, 0);
        ClassificationTree {
            nodes: grower.nodes,
        }
    }

    pub fn from_nodes(nodes: Vec<ClassNode>) -> Result<Self> {
        let tree = ClassificationTree { nodes };
        tree.validate(usize::MAX, usize::MAX)?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[ClassNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[ClassNode], id: usize) -> usize {
            match &nodes[id] {
                ClassNode::Leaf { .. } => 0,
                ClassNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_counts(&self, features: &[f64]) -> &[u32] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                ClassNode::Leaf { counts } => return counts,
                ClassNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Class frequencies of the leaf `features` falls into.
    pub fn predict_frequencies(&self, features: &[f64]) -> Vec<f64> {
        let counts = self.leaf_counts(features);
        let total: u32 = counts.iter().sum();
        counts
            .iter()
            .map(|&c| f64::from(c) / f64::from(total))
            .collect()
    }

    fn validate(&self, num_classes: usize, num_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        // Children must point forward so that traversal always terminates.
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                ClassNode::Leaf { counts } => {
                    if num_classes != usize::MAX && counts.len() != num_classes {
                        return Err(Error::Model(format!(
                            "leaf {id} has {} classes",
                            counts.len()
                        )));
                    }
                    if counts.iter().sum::<u32>() == 0 {
                        return Err(Error::Model(format!("leaf {id} has no samples")));
                    }
                }
                ClassNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let in_range = |c: &usize| *c > id && *c < self.nodes.len();
                    if !in_range(left) || !in_range(right) || !threshold.is_finite() {
                        return Err(Error::Model(format!("split node {id} is malformed")));
                    }
                    if num_features != usize::MAX && *feature >= num_features {
                        return Err(Error::Model(format!(
                            "split node {id} uses feature {feature}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Bagged ensemble of Gini trees over raw pixel intensities, with soft voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub format_version: u32,
    pub num_classes: usize,
    /// `[height, width, channels]` of the images the forest was trained on.
    pub input_shape: [usize; 3],
    pub params: ForestParams,
    pub trees: Vec<ClassificationTree>,
}

impl RandomForestModel {
    /// Trains a forest. Tree `t` draws its bootstrap sample and feature subsets
    /// from its own random stream, so the result does not depend on how trees
    /// are scheduled across threads.
    pub fn train(
        images: &[Image],
        labels: &[usize],
        num_classes: usize,
        params: &ForestParams,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Model("cannot train on an empty dataset".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::Model(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = images.iter().position(|im| !im.same_shape(&images[0])) {
            return Err(Error::Model(format!(
                "image {bad} has a different shape than image 0"
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Model(format!(
                "label {l} is not below num_classes {num_classes}"
            )));
        }
        if params.n_trees == 0 {
            return Err(Error::config("a forest needs at least one tree"));
        }
        let num_features = images[0].data().len();
        let mtry = params
            .feature_subsample
            .unwrap_or_else(|| (num_features as f64).sqrt().ceil() as usize)
            .clamp(1, num_features);

        let rows: Vec<&[f64]> = images.iter().map(|im| im.data()).collect();
        let data = TrainSet {
            rows: &rows,
            labels,
            num_classes,
        };
        let n = images.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let mut samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                ClassificationTree::fit(
                    &data,
                    &mut samples,
                    params.max_depth,
                    params.min_samples_split,
                    mtry,
                    &mut rng,
                )
            })
            .collect();

        let first = &images[0];
        Ok(RandomForestModel {
            format_version: MODEL_FORMAT_VERSION,
            num_classes,
            input_shape: [first.height(), first.width(), first.channels()],
            params: ForestParams {
                feature_subsample: Some(mtry),
                ..params.clone()
            },
            trees,
        })
    }

    pub fn from_trees(
        trees: Vec<ClassificationTree>,
        num_classes: usize,
        input_shape: [usize; 3],
        params: ForestParams,
    ) -> Result<Self> {
        let model = RandomForestModel {
            format_version: MODEL_FORMAT_VERSION,
            num_classes,
            input_shape,
            params,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format_version {}",
                self.format_version
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::Model("model has no trees".into()));
        }
        let num_features = self.input_shape.iter().product();
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(self.num_classes, num_features)
                .map_err(|e| Error::Model(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RandomForestModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn check_shape(&self, image: &Image) -> std::result::Result<(), PredictError> {
        let [h, w, c] = self.input_shape;
        if image.height() != h || image.width() != w || image.channels() != c {
            return Err(PredictError::Shape(format!(
                "forest expects {w}x{h}x{c}, got {}x{}x{}",
                image.width(),
                image.height(),
                image.channels()
            )));
        }
        Ok(())
    }

    pub fn predict_one(&self, image: &Image) -> std::result::Result<Vec<f64>, PredictError> {
        self.check_shape(image)?;
        let mut acc = vec![0.0; self.num_classes];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.predict_frequencies(image.data())) {
                *a += p;
            }
        }
        let t = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        Ok(acc)
    }

    /// Index of the most probable class (lowest index on ties).
    pub fn predict_label(&self, image: &Image) -> std::result::Result<usize, PredictError> {
        let p = self.predict_one(image)?;
        Ok(argmax(&p))
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            match v.partial_cmp(&best.1) {
                Some(Ordering::Greater) => (i, v),
                _ => best,
            }
        })
        .0
}

impl Predictor for RandomForestModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict_proba(&self, batch: &[Image]) -> std::result::Result<Vec<Vec<f64>>, PredictError> {
        batch.iter().map(|im| self.predict_one(im)).collect()
    }
}
