//! Perturbation database: binary samples around the instance, the black-box
//! output on each recovered image, and a locality weight per sample.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{predict_checked, PredictError, Predictor};
use crate::representation::{l2_distance, BinaryInstance, Image, MaskFill, Masker, SegmentMap};

pub const PERTURBATION_FORMAT_VERSION: u32 = 1;

/// Kernel width: an explicit value or the median positive sample distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sigma {
    #[default]
    Auto,
    Fixed(f64),
}

impl FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Sigma::Auto);
        }
        let v: f64 = s.parse().map_err(|_| {
            Error::config(format!(
                "sigma must be 'auto' or a positive number, got '{s}'"
            ))
        })?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(format!("sigma must be positive, got {v}")));
        }
        Ok(Sigma::Fixed(v))
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Auto => f.write_str("auto"),
            Sigma::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Sigma {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Auto => serializer.serialize_str("auto"),
            Sigma::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(Sigma::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "sigma must be positive, got {v}"
            ))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Space in which sample distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    #[default]
    OriginalImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: Sigma,
    #[serde(default)]
    pub distance_space: DistanceSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub zprime: BinaryInstance,
    /// Black-box probability of the target label on the recovered image.
    pub fz: f64,
    /// Locality weight `exp(-distance^2 / sigma^2)`.
    pub weight: f64,
    /// L2 distance between the instance and the recovered image.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub format_version: u32,
    pub num_features: usize,
    pub target_label: usize,
    pub sigma_used: f64,
    pub seed: u64,
    pub keep_prob: f64,
    pub records: Vec<PerturbationRecord>,
}

impl PerturbationSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn zprimes(&self) -> Vec<&BinaryInstance> {
        self.records.iter().map(|r| &r.zprime).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fz).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.weight).collect()
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != PERTURBATION_FORMAT_VERSION {
            return Err(Error::Sampling(format!(
                "unsupported perturbation set format_version {}",
                self.format_version
            )));
        }
        if !(self.sigma_used > 0.0) {
            return Err(Error::Sampling("sigma_used must be positive".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.zprime.len() != self.num_features {
                return Err(Error::Sampling(format!(
                    "record {i} has {} bits, expected {}",
                    r.zprime.len(),
                    self.num_features
                )));
            }
            if !(0.0..=1.0).contains(&r.fz) || !(r.weight > 0.0 && r.weight <= 1.0) {
                return Err(Error::Sampling(format!(
                    "record {i} has fz {} / weight {} out of range",
                    r.fz, r.weight
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PerturbationSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

/// Draws each bit independently, present with probability `keep_prob`.
pub fn draw_zprime<R: Rng + ?Sized>(d_prime: usize, rng: &mut R, keep_prob: f64) -> BinaryInstance {
    BinaryInstance::new((0..d_prime).map(|_| rng.gen_bool(keep_prob)).collect())
}

/// Random stream dedicated to sample `index`, independent of evaluation order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `exp(-distance^2 / sigma^2)`, floored at the smallest positive normal
/// float so that far samples keep a strictly positive weight.
pub fn kernel_from_distance(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (sigma * sigma))
        .exp()
        .max(f64::MIN_POSITIVE)
}

pub fn kernel_weight(x: &Image, z: &Image, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::config(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(kernel_from_distance(l2_distance(x, z)?, sigma))
}

/// Median of the strictly positive distances (mean of the two middle values
/// for an even count).
pub fn auto_sigma(distances: &[f64]) -> Result<f64> {
    let mut positive: Vec<f64> = distances.iter().copied().filter(|d| *d > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Sampling(
            "every sample coincides with the instance, so sigma cannot be chosen automatically; \
             lower keep_prob or pass an explicit sigma"
                .into(),
        ));
    }
    positive.sort_by(f64::total_cmp);
    let mid = positive.len() / 2;
    Ok(if positive.len() % 2 == 1 {
        positive[mid]
    } else {
        (positive[mid - 1] + positive[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub n_samples: usize,
    pub kernel: KernelConfig,
    pub keep_prob: f64,
    pub seed: u64,
    #[serde(default)]
    pub mask_fill: MaskFill,
    /// Images per predictor call.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    64
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            n_samples: 1000,
            kernel: KernelConfig::default(),
            keep_prob: 0.5,
            seed: 0,
            mask_fill: MaskFill::SegmentMean,
            batch_size: default_batch_size(),
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::config(format!(
                "need at least 2 samples, got {}",
                self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.keep_prob) {
            return Err(Error::config(format!(
                "keep_prob {} outside [0, 1]",
                self.keep_prob
            )));
        }
        if let Sigma::Fixed(s) = self.kernel.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("sigma must be positive, got {s}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Builds the perturbation database for explaining `label` at instance `x`.
///
/// Sample `i` uses its own random stream derived from `(seed, i)`; predictor
/// batches may run concurrently and are reassembled in index order, so the
/// result is a pure function of the arguments.
pub fn build_database<P: Predictor + ?Sized>(
    x: &Image,
    seg: &SegmentMap,
    f: &P,
    label: usize,
    params: &SamplingParams,
) -> Result<PerturbationSet> {
    params.validate()?;
    if label >= f.num_classes() {
        return Err(Error::config(format!(
            "target label {label} is out of range for a {}-class model",
            f.num_classes()
        )));
    }
    let masker = Masker::new(x, seg, params.mask_fill)?;
    let d_prime = seg.num_segments();
    let n = params.n_samples;

    let chunks: Vec<(usize, usize)> = (0..n)
        .step_by(params.batch_size)
        .map(|start| (start, (start + params.batch_size).min(n)))
        .collect();
    let evaluated: Vec<Result<Vec<(BinaryInstance, f64, f64)>>> = chunks
        .par_iter()
        .map(|&(start, end)| {
            let mut zprimes = Vec::with_capacity(end - start);
            let mut images = Vec::with_capacity(end - start);
            let mut distances = Vec::with_capacity(end - start);
            for i in start..end {
                let zprime = draw_zprime(
                    d_prime,
                    &mut sample_rng(params.seed, i as u64),
                    params.keep_prob,
                );
                let z = masker.recover(&zprime)?;
                distances.push(l2_distance(x, &z)?);
                images.push(z);
                zprimes.push(zprime);
            }
            let probs = predict_checked(f, &images).map_err(|source| {
                let index = match &source {
                    PredictError::Contract { index, .. } => start + index,
                    _ => start,
                };
                Error::PredictorFailed { index, source }
            })?;
            Ok(zprimes
                .into_iter()
                .zip(distances)
                .zip(probs)
                .map(|((zp, d), p)| (zp, d, p[label].clamp(0.0, 1.0)))
                .collect())
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    for chunk in evaluated {
        samples.extend(chunk?);
    }

    let sigma = match params.kernel.sigma {
        Sigma::Fixed(s) => s,
        Sigma::Auto => auto_sigma(&samples.iter().map(|s| s.1).collect::<Vec<_>>())?,
    };
    let records = samples
        .into_iter()
        .map(|(zprime, distance, fz)| PerturbationRecord {
            zprime,
            fz,
            weight: kernel_from_distance(distance, sigma),
            distance,
        })
        .collect();
    Ok(PerturbationSet {
        format_version: PERTURBATION_FORMAT_VERSION,
        num_features: d_prime,
        target_label: label,
        sigma_used: sigma,
        seed: params.seed,
        keep_prob: params.keep_prob,
        records,
    })
}
