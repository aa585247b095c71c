pub mod compare;
pub mod explain;
pub mod extract;
pub mod replay;
pub mod segment;
pub mod serve;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use tlime_core::explainer::ExplainerConfig;
use tlime_core::ingest::read_pnm;
use tlime_core::models::{ExternalConfig, ExternalPredictor, Predictor, RandomForestModel};
use tlime_core::representation::Image;
use tlime_core::sampling::KernelConfig;
use tlime_core::segmentation::SegmentationConfig;

use crate::args::{ExplainOpts, PredictorArgs, SegArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub fn seg_config(a: &SegArgs, seed: u64) -> SegmentationConfig {
    SegmentationConfig {
        method: a.method,
        target_segments: a.segments,
        compactness: a.compactness,
        iterations: a.slic_iterations,
        seed,
    }
}

pub fn explainer_config(o: &ExplainOpts, seed: u64) -> CliResult<ExplainerConfig> {
    let cfg = ExplainerConfig {
        n_samples: o.samples,
        max_depth: o.max_depth,
        delta: o.delta,
        kernel: KernelConfig {
            sigma: o.sigma,
            ..Default::default()
        },
        keep_prob: o.keep_prob,
        seed,
        target_label: o.label,
        ridge_lambda: o.ridge_lambda,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_image(path: &Path) -> CliResult<Image> {
    read_pnm(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn load_model(path: &Path) -> CliResult<RandomForestModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    RandomForestModel::from_json(&text).map_err(|e| CliError::from(e).context(path.display()))
}

/// Resolved predictor settings, for the manifest.
#[derive(Debug, Serialize)]
pub struct PredictorEcho {
    pub model: Option<String>,
    pub external: Option<String>,
    pub timeout_seconds: f64,
    pub workers: usize,
}

impl PredictorEcho {
    pub fn new(a: &PredictorArgs) -> Self {
        PredictorEcho {
            model: a.model.as_ref().map(|p| p.display().to_string()),
            external: a.external.clone(),
            timeout_seconds: a.timeout,
            workers: a.workers,
        }
    }
}

/// Opens the black box named by `a`. `probe` fixes the class count of an
/// external predictor.
pub fn load_predictor(
    a: &PredictorArgs,
    probe: &Image,
    manifest: &mut RunManifest,
) -> CliResult<Box<dyn Predictor>> {
    match (&a.model, &a.external) {
        (Some(path), None) => {
            manifest.add_input("model", path)?;
            Ok(Box::new(load_model(path)?))
        }
        (None, Some(command)) => {
            if !(a.timeout > 0.0 && a.timeout.is_finite()) {
                return Err(CliError::usage(format!(
                    "--timeout must be positive, got {}",
                    a.timeout
                )));
            }
            let cfg = ExternalConfig {
                timeout: Duration::from_secs_f64(a.timeout),
                workers: a.workers,
                num_classes: None,
            };
            Ok(Box::new(ExternalPredictor::spawn(command, &cfg, probe)?))
        }
        _ => Err(CliError::usage(
            "exactly one of --model or --external is required",
        )),
    }
}

/// `prefix` + `suffix`, creating the parent directory.
pub fn prefixed(prefix: &str, suffix: &str) -> CliResult<PathBuf> {
    let path = PathBuf::from(format!("{prefix}{suffix}"));
    ensure_parent(&path)?;
    Ok(path)
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("creating {}: {e}", dir.display()))),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

pub fn seconds(t: f64) -> String {
    format!("{t:.4}s")
}
