use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tlime_core::ingest::{read_idx, IdxKind};
use tlime_core::models::metrics::classification_report;
use tlime_core::models::{ForestParams, RandomForestModel};

use super::{ensure_parent, seconds};
use crate::args::TrainArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar_path, Recorder, RunManifest, WithManifest};

#[derive(Serialize)]
struct TrainConfig<'a> {
    forest: &'a ForestParams,
    split: f64,
    limit: Option<usize>,
    num_classes: usize,
    n_train: usize,
    n_test: usize,
}

/// Number of training rows for `n` examples, or why the split is unusable.
pub fn split_point(n: usize, split: f64) -> CliResult<usize> {
    if !(split > 0.0 && split < 1.0) {
        return Err(CliError::usage(format!(
            "--split must be strictly between 0 and 1 (got {split}); both the training and the test set need examples"
        )));
    }
    let n_train = (n as f64 * split).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(CliError::usage(format!(
            "--split {split} on {n} examples leaves an empty {} set",
            if n_train == 0 { "training" } else { "test" }
        )));
    }
    Ok(n_train)
}

pub fn run(a: &TrainArgs, argv: Vec<String>) -> CliResult<()> {
    let recorder = Recorder::start();
    let seed = a.seed.seed;
    let mut manifest = RunManifest::new(argv, seed);
    manifest.add_input("images", &a.images)?;
    manifest.add_input("labels", &a.labels)?;

    let images = read_idx(&a.images).map_err(|e| CliError::from(e).context(a.images.display()))?;
    let labels = read_idx(&a.labels).map_err(|e| CliError::from(e).context(a.labels.display()))?;
    if images.kind != IdxKind::Images || labels.kind != IdxKind::Labels {
        return Err(CliError::data(
            "--images needs a rank-3 IDX file and --labels a rank-1 IDX file",
        ));
    }
    if images.len() != labels.len() {
        return Err(CliError::data(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let n = a.limit.map_or(images.len(), |l| l.min(images.len()));
    let n_train = split_point(n, a.split)?;

    let mut x = images.images()?;
    x.truncate(n);
    let y: Vec<usize> = labels
        .labels()?
        .into_iter()
        .take(n)
        .map(usize::from)
        .collect();
    let seen = y.iter().max().map_or(0, |&m| m + 1);
    let num_classes = match a.classes {
        Some(k) if k < seen => {
            return Err(CliError::data(format!(
                "--classes {k} but the labels go up to {}",
                seen - 1
            )))
        }
        Some(k) => k,
        None => seen,
    };

    let params = ForestParams {
        n_trees: a.trees,
        max_depth: a.max_depth,
        seed,
        ..Default::default()
    };
    manifest.set_config(&TrainConfig {
        forest: &params,
        split: a.split,
        limit: a.limit,
        num_classes,
        n_train,
        n_test: n - n_train,
    })?;

    let start = Instant::now();
    let model = RandomForestModel::train(&x[..n_train], &y[..n_train], num_classes, &params)?;
    let train_time = start.elapsed().as_secs_f64();
    let predicted = x[n_train..]
        .par_iter()
        .map(|im| model.predict_label(im))
        .collect::<Result<Vec<_>, _>>()?;
    let report = classification_report(&y[n_train..], &predicted, num_classes);

    println!(
        "trained {} trees on {n_train} examples in {}, tested on {}",
        params.n_trees,
        seconds(train_time),
        n - n_train
    );
    println!();
    print!("{report}");

    ensure_parent(&a.out)?;
    let text = serde_json::to_string(&WithManifest {
        payload: &model,
        manifest: manifest.embedded(),
    })?;
    std::fs::write(&a.out, text)
        .map_err(|e| CliError::data(format!("writing {}: {e}", a.out.display())))?;
    recorder.finish(&manifest, &sidecar_path(&a.out))?;
    Ok(())
}
