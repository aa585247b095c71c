//! Checks shared by the integration tests and the acceptance harness. Each
//! returns a one-line summary on success and a description of the first
//! failure otherwise.

use std::collections::VecDeque;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tlime_core::explainer::{compare, explain_linear, explain_tree, ExplainerConfig, Explanation};
use tlime_core::ingest::{maybe_gunzip, parse_idx, parse_pnm, write_pnm, IdxKind, IngestError};
use tlime_core::models::{
    predict_checked, FnPredictor, ForestParams, PredictError, Predictor, RandomForestModel,
};
use tlime_core::representation::{l2_distance, recover, BinaryInstance, Image, SegmentMap};
use tlime_core::sampling::{
    kernel_from_distance, PerturbationRecord, PerturbationSet, PERTURBATION_FORMAT_VERSION,
};
use tlime_core::segmentation::{segment, SegmentMethod, SegmentationConfig};
use tlime_core::surrogate::{fit_linear, fit_tree, SurrogateTree, TreeNode, TreeParams};

use super::random_set;

pub type Check = Result<String, String>;

// ---------------------------------------------------------------- tree oracle

/// Independent exhaustive greedy CART: every feature is scored by recomputing
/// both children's weighted SSE from scratch with two-pass means.
#[derive(Debug)]
pub enum RefNode {
    Leaf {
        value: f64,
        weight_sum: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        gain: f64,
        left: Box<RefNode>,
        right: Box<RefNode>,
    },
}

const REF_EPS: f64 = 1e-12;
const REF_MIN_LEAF: f64 = 1e-6;

fn sse(idx: &[usize], y: &[f64], w: &[f64]) -> f64 {
    let total: f64 = idx.iter().map(|&i| w[i]).sum();
    let mean = idx.iter().map(|&i| w[i] * y[i]).sum::<f64>() / total;
    idx.iter().map(|&i| w[i] * (y[i] - mean).powi(2)).sum()
}

pub fn reference_tree(z: &PerturbationSet, max_depth: usize) -> RefNode {
    let total: f64 = z.records.iter().map(|r| r.weight).sum();
    let w: Vec<f64> = z.records.iter().map(|r| r.weight / total).collect();
    let y: Vec<f64> = z.records.iter().map(|r| r.fz).collect();
    reference_node(z, &y, &w, total, (0..z.len()).collect(), 0, max_depth)
}

fn reference_node(
    z: &PerturbationSet,
    y: &[f64],
    w: &[f64],
    total: f64,
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
) -> RefNode {
    let bit = |i: usize, k: usize| z.records[i].zprime.bit(k);
    let mut candidates = Vec::new();
    if depth < max_depth {
        let parent = sse(&idx, y, w);
        for k in 0..z.num_features {
            let (right, left): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| bit(i, k));
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let wl: f64 = left.iter().map(|&i| w[i]).sum();
            let wr: f64 = right.iter().map(|&i| w[i]).sum();
            if wl < REF_MIN_LEAF || wr < REF_MIN_LEAF {
                continue;
            }
            let gain = parent - sse(&left, y, w) - sse(&right, y, w);
            if gain > REF_EPS {
                candidates.push((k, gain));
            }
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    match candidates.iter().find(|c| c.1 >= best - REF_EPS) {
        Some(&(feature, gain)) => {
            let (right, left): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| bit(i, feature));
            RefNode::Split {
                feature,
                gain: gain * total,
                left: Box::new(reference_node(z, y, w, total, left, depth + 1, max_depth)),
                right: Box::new(reference_node(z, y, w, total, right, depth + 1, max_depth)),
            }
        }
        None => RefNode::Leaf {
            value: idx.iter().map(|&i| w[i] * y[i]).sum::<f64>()
                / idx.iter().map(|&i| w[i]).sum::<f64>(),
            weight_sum: idx.iter().map(|&i| z.records[i].weight).sum(),
            n_samples: idx.len(),
        },
    }
}

pub fn same_tree(got: &TreeNode, want: &RefNode, tol: f64) -> Result<(), String> {
    match (got, want) {
        (
            TreeNode::Leaf {
                value,
                weight_sum,
                n_samples,
            },
            RefNode::Leaf {
                value: v,
                weight_sum: ws,
                n_samples: n,
            },
        ) => {
            if (value - v).abs() > tol || (weight_sum - ws).abs() > tol || n_samples != n {
                return Err(format!(
                    "leaf ({value}, {weight_sum}, {n_samples}) vs reference ({v}, {ws}, {n})"
                ));
            }
            Ok(())
        }
        (
            TreeNode::Internal {
                feature,
                gain,
                left,
                right,
            },
            RefNode::Split {
                feature: f,
                gain: g,
                left: l,
                right: r,
            },
        ) => {
            if feature != f {
                return Err(format!(
                    "split on feature {feature}, reference splits on {f}"
                ));
            }
            if (gain - g).abs() > tol * g.abs().max(1.0) {
                return Err(format!("gain {gain} vs reference {g} on feature {f}"));
            }
            same_tree(left, l, tol)?;
            same_tree(right, r, tol)
        }
        (got, want) => Err(format!("node kind differs: {got:?} vs {want:?}")),
    }
}

pub fn tree_oracle_suite(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = 0;
    for case in 0..cases {
        let z = random_set(&mut rng, 8, 30);
        let depth = rng.gen_range(1..=2);
        let tree = fit_tree(&z, &TreeParams::with_depth(depth))
            .map_err(|e| format!("case {case}: {e}"))?;
        let reference = reference_tree(&z, depth);
        same_tree(&tree.root, &reference, 1e-9)
            .map_err(|e| format!("case {case} (depth {depth}): {e}"))?;
        splits += tree.split_features().len();
    }
    Ok(format!(
        "{cases} random sets matched the exhaustive reference ({splits} split features in total)"
    ))
}

// ------------------------------------------------------------- linear oracle

/// Gradient of `sum w~ (y - b0 - b.z)^2 + lambda |b|^2` where `w~` are the
/// weights normalised to sum to one.
pub fn ridge_gradient(z: &PerturbationSet, lambda: f64, intercept: f64, coef: &[f64]) -> Vec<f64> {
    let total: f64 = z.records.iter().map(|r| r.weight).sum();
    let mut grad = vec![0.0; coef.len() + 1];
    for r in &z.records {
        let pred = intercept
            + coef
                .iter()
                .enumerate()
                .filter(|(k, _)| r.zprime.bit(*k))
                .map(|(_, c)| c)
                .sum::<f64>();
        let resid = r.fz - pred;
        let w = r.weight / total;
        grad[0] -= 2.0 * w * resid;
        for (k, g) in grad[1..].iter_mut().enumerate() {
            if r.zprime.bit(k) {
                *g -= 2.0 * w * resid;
            }
        }
    }
    for (g, c) in grad[1..].iter_mut().zip(coef) {
        *g += 2.0 * lambda * c;
    }
    grad
}

pub fn linear_gradient_suite(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let z = random_set(&mut rng, 8, 40);
        let lambda = 10f64.powf(rng.gen_range(-4.0..0.0));
        let m = fit_linear(&z, lambda).map_err(|e| format!("case {case}: {e}"))?;
        let norm = ridge_gradient(&z, lambda, m.intercept, &m.coefficients)
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        worst = worst.max(norm);
        if !(norm < 1e-6) {
            return Err(format!(
                "case {case}: gradient norm {norm:e} at lambda {lambda}"
            ));
        }
    }
    Ok(format!(
        "{cases} ridge systems, largest gradient norm {worst:.2e}"
    ))
}

/// Noiseless linear targets on a full-rank design are recovered exactly.
pub fn linear_recovery_suite(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = rng.gen_range(1..=8);
        let intercept = rng.gen_range(-1.0..1.0);
        let coef: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rows = vec![vec![false; d]];
        rows.extend((0..d).map(|k| (0..d).map(|j| j == k).collect()));
        rows.extend((0..rng.gen_range(0..20)).map(|_| (0..d).map(|_| rng.gen_bool(0.5)).collect()));
        let records = rows
            .into_iter()
            .map(|bits: Vec<bool>| {
                let fz = intercept
                    + coef
                        .iter()
                        .zip(&bits)
                        .filter(|(_, b)| **b)
                        .map(|(c, _)| c)
                        .sum::<f64>();
                PerturbationRecord {
                    zprime: BinaryInstance::new(bits),
                    fz,
                    weight: rng.gen_range(0.05..=1.0),
                    distance: 0.0,
                }
            })
            .collect();
        let z = PerturbationSet {
            format_version: PERTURBATION_FORMAT_VERSION,
            num_features: d,
            target_label: 0,
            sigma_used: 1.0,
            seed: 0,
            keep_prob: 0.5,
            records,
        };
        let m = fit_linear(&z, 0.0).map_err(|e| format!("case {case}: {e}"))?;
        let err = m
            .coefficients
            .iter()
            .zip(&coef)
            .map(|(a, b)| (a - b).abs())
            .fold((m.intercept - intercept).abs(), f64::max);
        worst = worst.max(err);
        if !(err < 1e-8) {
            return Err(format!("case {case}: recovery error {err:e}"));
        }
    }
    Ok(format!(
        "{cases} noiseless systems, largest coefficient error {worst:.2e}"
    ))
}

// ---------------------------------------------------------------- properties

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(
            proptest::test_runner::RngAlgorithm::ChaCha,
        ),
    )
}

fn run<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Check
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map(|_| format!("{name}: {cases} cases"))
        .map_err(|e| format!("{name}: {e}"))
}

fn image_strategy(max_side: usize) -> impl Strategy<Value = Image> {
    (
        1..=max_side,
        1..=max_side,
        prop_oneof![Just(1usize), Just(3usize)],
    )
        .prop_flat_map(|(w, h, c)| {
            proptest::collection::vec(0u8..=255, w * h * c)
                .prop_map(move |bytes| Image::from_bytes(w, h, c, &bytes).expect("valid shape"))
        })
}

fn image_and_segments(max_side: usize) -> impl Strategy<Value = (Image, SegmentationConfig)> {
    image_strategy(max_side).prop_flat_map(|img| {
        let pixels = img.pixel_count();
        (
            Just(img),
            1..=pixels,
            any::<bool>(),
            0.0f64..40.0,
            any::<u64>(),
        )
            .prop_map(|(img, target, slic, compactness, seed)| {
                let cfg = SegmentationConfig {
                    method: if slic {
                        SegmentMethod::Slic
                    } else {
                        SegmentMethod::Grid
                    },
                    target_segments: target,
                    compactness,
                    seed,
                    ..SegmentationConfig::default()
                };
                (img, cfg)
            })
    })
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

pub fn kernel_properties(cases: u32) -> Check {
    run(
        "kernel bounds and monotonicity",
        cases,
        (0.0f64..50.0, 0.0f64..50.0, 1e-3f64..20.0, 1e-3f64..20.0),
        |(a, b, s1, s2)| {
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            let (narrow, wide) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let w = kernel_from_distance(near, narrow);
            ensure(w > 0.0 && w <= 1.0, || format!("weight {w} outside (0, 1]"))?;
            ensure(kernel_from_distance(0.0, narrow) == 1.0, || {
                "zero distance must weigh 1".into()
            })?;
            ensure(kernel_from_distance(far, narrow) <= w, || {
                format!("weight grew from {near} to {far}")
            })?;
            ensure(kernel_from_distance(near, wide) >= w, || {
                "wider sigma lowered a weight".into()
            })
        },
    )
}

/// Independent check of the segment map invariants: cover, contiguous ids,
/// one 4-connected component per id.
pub fn check_segment_map(seg: &SegmentMap) -> Result<(), String> {
    let (w, h) = (seg.width(), seg.height());
    let labels = seg.labels();
    if labels.len() != w * h {
        return Err(format!("{} labels for {} pixels", labels.len(), w * h));
    }
    let d = seg.num_segments();
    let mut seen = vec![false; d];
    for &l in labels {
        let l = l as usize;
        if l >= d {
            return Err(format!("label {l} >= {d}"));
        }
        seen[l] = true;
    }
    if let Some(l) = seen.iter().position(|s| !s) {
        return Err(format!("segment {l} is empty"));
    }
    let mut visited = vec![false; w * h];
    let mut components = 0;
    for start in 0..w * h {
        if visited[start] {
            continue;
        }
        components += 1;
        let l = labels[start];
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            let mut push = |q: usize| {
                if !visited[q] && labels[q] == l {
                    visited[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < w {
                push(p + 1);
            }
            if y > 0 {
                push(p - w);
            }
            if y + 1 < h {
                push(p + w);
            }
        }
    }
    if components != d {
        return Err(format!(
            "{components} connected components for {d} segments"
        ));
    }
    Ok(())
}

pub fn segmentation_properties(cases: u32) -> Check {
    run(
        "segmentation cover and connectivity",
        cases,
        image_and_segments(12),
        |(img, cfg)| {
            let seg = segment(&img, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
            check_segment_map(&seg).map_err(TestCaseError::fail)?;
            ensure(seg.num_segments() <= cfg.target_segments, || {
                format!(
                    "{} segments for target {}",
                    seg.num_segments(),
                    cfg.target_segments
                )
            })?;
            if cfg.method == SegmentMethod::Grid {
                ensure(seg.num_segments() == cfg.target_segments, || {
                    "grid must hit the target exactly".into()
                })?;
            }
            let again = segment(&img, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
            ensure(again == seg, || "segmentation is not deterministic".into())
        },
    )
}

pub fn recover_properties(cases: u32) -> Check {
    let strategy = image_and_segments(10).prop_flat_map(|(img, cfg)| {
        let seg = segment(
            &img,
            &SegmentationConfig {
                method: SegmentMethod::Grid,
                ..cfg
            },
        )
        .expect("grid");
        let d = seg.num_segments();
        (
            Just(img),
            Just(seg),
            proptest::collection::vec(any::<bool>(), d),
        )
    });
    run(
        "recover identity, mean fill and idempotence",
        cases,
        strategy,
        |(img, seg, bits)| {
            let fail = |e: tlime_core::Error| TestCaseError::fail(e.to_string());
            let d = seg.num_segments();
            let full = recover(&BinaryInstance::ones(d), &img, &seg).map_err(fail)?;
            ensure(full == img, || "all-ones must reproduce the image".into())?;
            ensure(l2_distance(&full, &img).map_err(fail)? == 0.0, || {
                "distance to itself".into()
            })?;

            let zprime = BinaryInstance::new(bits);
            let z = recover(&zprime, &img, &seg).map_err(fail)?;
            let means = seg.segment_means(&img).map_err(fail)?;
            let c = img.channels();
            for p in 0..img.pixel_count() {
                let s = seg.labels()[p] as usize;
                let want: &[f64] = if zprime.bit(s) {
                    img.pixel(p)
                } else {
                    &means[s]
                };
                for ch in 0..c {
                    ensure((z.pixel(p)[ch] - want[ch]).abs() < 1e-12, || {
                        format!("pixel {p} channel {ch}")
                    })?;
                }
            }
            let again = recover(&zprime, &z, &seg).map_err(fail)?;
            for (a, b) in again.data().iter().zip(z.data()) {
                ensure((a - b).abs() < 1e-12, || {
                    "masking twice changed the image".into()
                })?;
            }
            Ok(())
        },
    )
}

pub fn probability_properties(cases: u32) -> Check {
    let strategy = proptest::collection::vec(-0.2f64..1.2, 2..6)
        .prop_flat_map(|raw| (Just(raw), any::<bool>()));
    let checked = run(
        "probability contract at the predictor boundary",
        cases,
        strategy,
        |(raw, normalise)| {
            let k = raw.len();
            let probs: Vec<f64> = if normalise {
                let clipped: Vec<f64> = raw.iter().map(|p| p.abs() + 1e-3).collect();
                let total: f64 = clipped.iter().sum();
                clipped.iter().map(|p| p / total).collect()
            } else {
                raw.clone()
            };
            let expected_ok = probs.iter().all(|p| *p >= 0.0 && *p <= 1.0 + 1e-6)
                && (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6;
            let f = FnPredictor::new(k, move |_: &Image| probs.clone());
            let x = Image::filled(2, 2, 1, 0.5).expect("image");
            match predict_checked(&f, &[x.clone(), x]) {
                Ok(out) => {
                    ensure(expected_ok, || {
                        "an invalid distribution was accepted".into()
                    })?;
                    for p in &out {
                        ensure((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6, || {
                            "sum drifted".into()
                        })?;
                    }
                    Ok(())
                }
                Err(PredictError::Contract { .. }) => {
                    ensure(!expected_ok, || "a valid distribution was rejected".into())
                }
                Err(e) => Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        },
    )?;

    // forest outputs on arbitrary images
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let images: Vec<Image> = (0..60)
        .map(|_| Image::new(4, 4, 1, (0..16).map(|_| rng.gen()).collect()).expect("image"))
        .collect();
    let labels: Vec<usize> = images
        .iter()
        .map(|im| (im.data()[0] * 3.0) as usize)
        .collect();
    let forest = RandomForestModel::train(
        &images,
        &labels,
        3,
        &ForestParams {
            n_trees: 8,
            seed: 3,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let forest_check = run(
        "forest outputs are distributions",
        cases,
        image_strategy(4),
        |img| {
            let img = Image::new(
                4,
                4,
                1,
                (0..16).map(|i| img.data()[i % img.data().len()]).collect(),
            )
            .expect("image");
            let probs = forest
                .predict_proba(&[img])
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let sum: f64 = probs[0].iter().sum();
            ensure(
                (sum - 1.0).abs() <= 1e-9 && probs[0].iter().all(|p| *p >= 0.0),
                || format!("sum {sum}"),
            )
        },
    )?;
    Ok(format!("{checked}; {forest_check}"))
}

fn scaled(z: &PerturbationSet, c: f64) -> PerturbationSet {
    let mut s = z.clone();
    s.records.iter_mut().for_each(|r| r.weight *= c);
    s
}

fn tree_scaled_eq(a: &TreeNode, b: &TreeNode, c: f64) -> bool {
    match (a, b) {
        (
            TreeNode::Leaf {
                value: v1,
                weight_sum: w1,
                n_samples: n1,
            },
            TreeNode::Leaf {
                value: v2,
                weight_sum: w2,
                n_samples: n2,
            },
        ) => (v1 - v2).abs() < 1e-9 && (w1 * c - w2).abs() < 1e-9 * w2.abs().max(1.0) && n1 == n2,
        (
            TreeNode::Internal {
                feature: f1,
                gain: g1,
                left: l1,
                right: r1,
            },
            TreeNode::Internal {
                feature: f2,
                gain: g2,
                left: l2,
                right: r2,
            },
        ) => {
            f1 == f2
                && (g1 * c - g2).abs() < 1e-9 * g2.abs().max(1.0)
                && tree_scaled_eq(l1, l2, c)
                && tree_scaled_eq(r1, r2, c)
        }
        _ => false,
    }
}

pub fn rescaling_properties(cases: u32) -> Check {
    let strategy = (any::<u64>(), -3.0f64..3.0, 1usize..=4, 1e-4f64..1.0);
    run(
        "weight rescaling invariance of both surrogates",
        cases,
        strategy,
        |(seed, log_c, depth, lambda)| {
            let z = random_set(&mut ChaCha8Rng::seed_from_u64(seed), 8, 40);
            let c = 10f64.powf(log_c);
            let zc = scaled(&z, c);
            let fail = |e: tlime_core::Error| TestCaseError::fail(e.to_string());
            let t1 = fit_tree(&z, &TreeParams::with_depth(depth)).map_err(fail)?;
            let t2 = fit_tree(&zc, &TreeParams::with_depth(depth)).map_err(fail)?;
            ensure(tree_scaled_eq(&t1.root, &t2.root, c), || {
                format!("trees differ under scale {c}")
            })?;
            let l1 = fit_linear(&z, lambda).map_err(fail)?;
            let l2 = fit_linear(&zc, lambda).map_err(fail)?;
            let diff = l1
                .coefficients
                .iter()
                .zip(&l2.coefficients)
                .map(|(a, b)| (a - b).abs())
                .fold((l1.intercept - l2.intercept).abs(), f64::max);
            ensure(diff < 1e-9, || {
                format!("linear models differ by {diff:e} under scale {c}")
            })
        },
    )
}

/// Smooth synthetic classifier over 8x8 grayscale images.
pub fn synthetic_predictor() -> FnPredictor<impl Fn(&Image) -> Vec<f64> + Send + Sync> {
    FnPredictor::new(3, |im: &Image| {
        let d = im.data();
        let n = d.len() as f64;
        let left: f64 = d
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 8 < 4)
            .map(|(_, v)| v)
            .sum::<f64>()
            / n;
        let top: f64 = d[..d.len() / 2].iter().sum::<f64>() / n;
        let logits = [4.0 * left, 6.0 * top * left, 1.0 - 2.0 * top];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    })
}

pub fn synthetic_image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(8, 8, 1, (0..64).map(|_| rng.gen::<f64>()).collect()).expect("image")
}

/// Explanation JSON with the timing field zeroed.
pub fn canonical(e: &Explanation) -> String {
    let mut e = e.clone();
    e.fit_time = 0.0;
    e.to_json().expect("serializable")
}

pub fn determinism_properties(runs: usize) -> Check {
    let f = synthetic_predictor();
    let one_thread = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    for i in 0..runs as u64 {
        let x = synthetic_image(i);
        let seg = segment(
            &x,
            &SegmentationConfig {
                method: SegmentMethod::Slic,
                target_segments: 6,
                seed: i,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let cfg = ExplainerConfig {
            n_samples: 300,
            seed: i,
            ..Default::default()
        };
        let a = explain_tree(&x, &seg, &f, &cfg).map_err(|e| e.to_string())?;
        let b = one_thread
            .install(|| explain_tree(&x, &seg, &f, &cfg))
            .map_err(|e| e.to_string())?;
        if canonical(&a) != canonical(&b) {
            return Err(format!(
                "run {i}: tree explanation differs between thread pools"
            ));
        }
        let la = explain_linear(&x, &seg, &f, &cfg).map_err(|e| e.to_string())?;
        let lb = explain_linear(&x, &seg, &f, &cfg).map_err(|e| e.to_string())?;
        if canonical(&la) != canonical(&lb) {
            return Err(format!("run {i}: linear explanation differs between runs"));
        }
        let (r1, t1, _) = compare(&x, &seg, &f, &cfg).map_err(|e| e.to_string())?;
        let (r2, _, _) = one_thread
            .install(|| compare(&x, &seg, &f, &cfg))
            .map_err(|e| e.to_string())?;
        if r1.perturbation_digest != r2.perturbation_digest || canonical(&t1) != canonical(&a) {
            return Err(format!("run {i}: comparison is not reproducible"));
        }
    }
    Ok(format!(
        "determinism: {runs} instances byte-identical across runs and thread pools"
    ))
}

pub fn property_suites(cases: u32) -> Vec<Check> {
    vec![
        kernel_properties(cases),
        recover_properties(cases),
        segmentation_properties(cases),
        probability_properties(cases),
        rescaling_properties(cases),
        determinism_properties(5),
    ]
}

// -------------------------------------------------------------------- ingest

pub fn idx_images_fixture() -> Vec<u8> {
    // two 2x3 images
    let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
    b.extend([0, 51, 102, 153, 204, 255, 255, 204, 153, 102, 51, 0]);
    b
}

pub fn idx_labels_fixture() -> Vec<u8> {
    vec![0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9]
}

pub fn pgm_fixture() -> Vec<u8> {
    let mut b = b"P5\n# comment line\n3 2\n255\n".to_vec();
    b.extend([0, 128, 255, 10, 20, 30]);
    b
}

pub fn ppm_fixture() -> Vec<u8> {
    let mut b = b"P6 2 1 255\n".to_vec();
    b.extend([255, 0, 0, 0, 0, 255]);
    b
}

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory gzip")
}

pub fn ingest_fixtures() -> Check {
    let images = parse_idx(&idx_images_fixture()).map_err(|e| e.to_string())?;
    if images.kind != IdxKind::Images || images.dims != vec![2, 2, 3] {
        return Err(format!(
            "image header decoded as {:?} {:?}",
            images.kind, images.dims
        ));
    }
    let decoded = images.images().map_err(|e| e.to_string())?;
    if decoded.len() != 2
        || decoded[0].width() != 3
        || decoded[0].height() != 2
        || decoded[1].data()[0] != 1.0
        || decoded[0].data()[1] != 51.0 / 255.0
    {
        return Err("image payload decoded incorrectly".into());
    }
    let labels = parse_idx(&idx_labels_fixture()).map_err(|e| e.to_string())?;
    if labels.labels().map_err(|e| e.to_string())? != vec![7, 0, 9] {
        return Err("labels decoded incorrectly".into());
    }
    let gz = maybe_gunzip(gzip(&idx_labels_fixture())).map_err(|e| e.to_string())?;
    if gz != idx_labels_fixture() {
        return Err("gzip round trip".into());
    }
    let pgm = parse_pnm(&pgm_fixture()).map_err(|e| e.to_string())?;
    if (pgm.width(), pgm.height(), pgm.channels()) != (3, 2, 1)
        || pgm.to_bytes() != vec![0, 128, 255, 10, 20, 30]
    {
        return Err("PGM decoded incorrectly".into());
    }
    let ppm = parse_pnm(&ppm_fixture()).map_err(|e| e.to_string())?;
    if (ppm.width(), ppm.height(), ppm.channels()) != (2, 1, 3)
        || ppm.data() != [1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
    {
        return Err("PPM decoded incorrectly".into());
    }
    for img in [&pgm, &ppm] {
        if &parse_pnm(&write_pnm(img)).map_err(|e| e.to_string())? != img {
            return Err("Netpbm write/parse round trip".into());
        }
    }

    let cases: Vec<(&str, Result<(), IngestError>, fn(&IngestError) -> bool)> = vec![
        (
            "bad magic",
            parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]).map(drop),
            |e| matches!(e, IngestError::BadMagic(_)),
        ),
        (
            "float dtype",
            parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0]).map(drop),
            |e| matches!(e, IngestError::UnsupportedDtype(0x0d)),
        ),
        (
            "rank 2",
            parse_idx(&[0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 5]).map(drop),
            |e| matches!(e, IngestError::UnsupportedRank(2)),
        ),
        (
            "short header",
            parse_idx(&[0, 0, 8, 3, 0, 0]).map(drop),
            |e| matches!(e, IngestError::Truncated { .. }),
        ),
        (
            "short payload",
            parse_idx(&idx_images_fixture()[..20]).map(drop),
            |e| matches!(e, IngestError::Truncated { .. }),
        ),
        (
            "trailing bytes",
            parse_idx(&[idx_labels_fixture(), vec![1]].concat()).map(drop),
            |e| matches!(e, IngestError::TrailingBytes { extra: 1 }),
        ),
        ("ascii pgm", parse_pnm(b"P2 1 1 255\n0").map(drop), |e| {
            matches!(e, IngestError::UnsupportedMagic(_))
        }),
        (
            "16-bit pgm",
            parse_pnm(b"P5 1 1 65535\n\x00\x00").map(drop),
            |e| matches!(e, IngestError::UnsupportedMaxval(65535)),
        ),
        ("missing height", parse_pnm(b"P5 1 ").map(drop), |e| {
            matches!(e, IngestError::MalformedHeader(_))
        }),
        ("zero width", parse_pnm(b"P5 0 1 255\n").map(drop), |e| {
            matches!(e, IngestError::MalformedHeader(_))
        }),
        (
            "short raster",
            parse_pnm(b"P6 2 2 255\n\x00\x00\x00").map(drop),
            |e| matches!(e, IngestError::Truncated { .. }),
        ),
        (
            "corrupt gzip",
            maybe_gunzip(vec![0x1f, 0x8b, 8, 0, 1, 2]).map(drop),
            |e| matches!(e, IngestError::Gzip(_)),
        ),
    ];
    for (name, result, class) in &cases {
        match result {
            Err(e) if class(e) => {}
            other => return Err(format!("{name}: got {other:?}")),
        }
    }
    Ok(format!(
        "fixtures decode exactly; {} corrupted headers rejected with the right error",
        cases.len()
    ))
}

fn mutate(rng: &mut ChaCha8Rng, mut bytes: Vec<u8>) -> Vec<u8> {
    for _ in 0..rng.gen_range(1..=4) {
        match rng.gen_range(0..5) {
            0 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes[i] = rng.gen();
            }
            2 => {
                let i = rng.gen_range(0..=bytes.len());
                bytes.insert(i, rng.gen());
            }
            3 if !bytes.is_empty() => {
                let i = rng.gen_range(0..bytes.len());
                bytes.remove(i);
            }
            _ => {
                let keep = rng.gen_range(0..=bytes.len());
                bytes.truncate(keep);
            }
        }
    }
    bytes
}

fn exercise(bytes: &[u8]) {
    if let Ok(raw) = maybe_gunzip(bytes.to_vec()) {
        if let Ok(ds) = parse_idx(&raw) {
            let _ = ds.images();
            let _ = ds.labels();
            if !ds.is_empty() {
                let _ = ds.image(ds.len() - 1);
            }
        }
    }
    let _ = parse_pnm(bytes);
}

pub fn ingest_fuzz(mutations: usize, seed: u64) -> Check {
    let seeds = [
        idx_images_fixture(),
        idx_labels_fixture(),
        gzip(&idx_images_fixture()),
        gzip(&idx_labels_fixture()),
        pgm_fixture(),
        ppm_fixture(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut panics = Vec::new();
    for m in 0..mutations {
        let input = mutate(&mut rng, seeds[m % seeds.len()].clone());
        if catch_unwind(AssertUnwindSafe(|| exercise(&input))).is_err() {
            panics.push(input);
        }
    }
    std::panic::set_hook(hook);
    match panics.first() {
        None => Ok(format!(
            "{mutations} random mutations parsed or rejected without a panic"
        )),
        Some(p) => Err(format!(
            "{} of {mutations} mutations panicked, first input {p:02x?}",
            panics.len()
        )),
    }
}

// ------------------------------------------------------------------ helpers

pub fn leaves(tree: &SurrogateTree) -> usize {
    fn count(n: &TreeNode) -> usize {
        match n {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => count(left) + count(right),
        }
    }
    count(&tree.root)
}
