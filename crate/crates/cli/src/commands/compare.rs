use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlime_core::explainer::{
    compare_batch, derive_seed, BatchInstance, BatchReport, BatchRow, ComparisonReport,
};

use super::explain::ExplainRun;
use super::{
    explainer_config, load_image, load_predictor, prefixed, seconds, seg_config, PredictorEcho,
};
use crate::args::CompareArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Recorder, RunManifest, WithManifest};

#[derive(Serialize)]
struct CompareRun<'a> {
    #[serde(flatten)]
    run: ExplainRun<'a>,
    jobs: usize,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    seed: u64,
    num_segments: usize,
    target_label: usize,
    fx: f64,
    tree_gx: f64,
    tree_error: f64,
    tree_fit_time: f64,
    tree_depth: Option<usize>,
    linear_gx: f64,
    linear_error: f64,
    linear_fit_time: f64,
    tree_no_worse: bool,
}

#[derive(Debug, Deserialize)]
struct InjectedRow {
    fx: f64,
    tree_gx: f64,
    linear_gx: f64,
    #[serde(default)]
    label: usize,
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"))
}

/// Image paths named by `--instances`: a directory (sorted by name) or a
/// list file with one path per line, relative to the list file.
fn instance_paths(source: &Path) -> CliResult<Vec<PathBuf>> {
    let read_err = |e: std::io::Error| CliError::data(format!("reading {}: {e}", source.display()));
    let paths: Vec<PathBuf> = if source.is_dir() {
        let mut v = Vec::new();
        for entry in fs::read_dir(source).map_err(read_err)? {
            let p = entry.map_err(read_err)?.path();
            if p.is_file() && is_image(&p) {
                v.push(p);
            }
        }
        v.sort();
        v
    } else {
        let base = source.parent().unwrap_or(Path::new(""));
        fs::read_to_string(source)
            .map_err(read_err)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    };
    if paths.is_empty() {
        return Err(CliError::data(format!(
            "no images found in {}",
            source.display()
        )));
    }
    Ok(paths)
}

fn injected(path: &Path, seed: u64) -> CliResult<BatchReport> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<InjectedRow>().enumerate() {
        let r = rec?;
        rows.push(BatchRow {
            instance: format!("row-{i}"),
            seed: derive_seed(seed, i as u64),
            num_segments: 0,
            report: ComparisonReport::from_outputs(r.label, r.fx, r.tree_gx, r.linear_gx),
        });
    }
    Ok(BatchReport::new(rows)?)
}

fn write_csv(path: &Path, report: &BatchReport) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for row in &report.rows {
        let r = &row.report;
        w.serialize(CsvRow {
            instance: &row.instance,
            seed: row.seed,
            num_segments: row.num_segments,
            target_label: r.target_label,
            fx: r.fx,
            tree_gx: r.tree.gx,
            tree_error: r.tree.error,
            tree_fit_time: r.tree.fit_time,
            tree_depth: r.tree.depth_used,
            linear_gx: r.linear.gx,
            linear_error: r.linear.error,
            linear_fit_time: r.linear.fit_time,
            tree_no_worse: r.tree_no_worse(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn print_table(report: &BatchReport) {
    let width = report
        .rows
        .iter()
        .map(|r| r.instance.len())
        .max()
        .unwrap_or(0)
        .max(8);
    println!(
        "{:width$} | {:>6} | {:>7} | {:>8} | {:>6} | {:>7} | {:>9} | {:>8}",
        "instance", "fx", "tree gx", "tree err", "lin gx", "lin err", "tree time", "lin time"
    );
    for row in &report.rows {
        let r = &row.report;
        println!(
            "{:width$} | {:>6.4} | {:>7.4} | {:>8.4} | {:>6.4} | {:>7.4} | {:>9} | {:>8}",
            row.instance,
            r.fx,
            r.tree.gx,
            r.tree.error,
            r.linear.gx,
            r.linear.error,
            seconds(r.tree.fit_time),
            seconds(r.linear.fit_time)
        );
    }
    let a = &report.aggregate;
    println!();
    println!("instances       {}", a.n);
    println!(
        "mean error      tree {:.4}  linear {:.4}",
        a.mean_tree_error, a.mean_linear_error
    );
    println!(
        "tree better     {:.1}%  (no worse {:.1}%)",
        100.0 * a.win_rate,
        100.0 * a.no_worse_rate
    );
    println!(
        "mean fit time   tree {}  linear {}",
        seconds(a.mean_tree_fit_time),
        seconds(a.mean_linear_fit_time)
    );
}

pub fn run(a: &CompareArgs, argv: Vec<String>) -> CliResult<()> {
    let recorder = Recorder::start();
    let seed = a.seed.seed;
    let mut manifest = RunManifest::new(argv, seed);
    let seg_cfg = seg_config(&a.seg, seed);
    let cfg = explainer_config(&a.opts, seed)?;
    manifest.set_config(&CompareRun {
        run: ExplainRun {
            predictor: PredictorEcho::new(&a.predictor),
            segmentation: &seg_cfg,
            explainer: &cfg,
        },
        jobs: a.jobs,
    })?;

    let report = if let Some(path) = &a.inject {
        manifest.add_input("injected", path)?;
        injected(path, seed)?
    } else {
        let paths = match (&a.image, &a.instances) {
            (Some(image), None) => vec![image.clone()],
            (None, Some(source)) => instance_paths(source)?,
            _ => return Err(CliError::usage("one of --image or --instances is required")),
        };
        let mut instances = Vec::with_capacity(paths.len());
        for p in &paths {
            manifest.add_input("instance", p)?;
            instances.push(BatchInstance {
                name: p.display().to_string(),
                image: load_image(p)?,
            });
        }
        let f = load_predictor(&a.predictor, &instances[0].image, &mut manifest)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
        pool.install(|| compare_batch(&instances, &seg_cfg, f.as_ref(), &cfg))?
    };

    write_json(
        &prefixed(&a.out, ".json")?,
        &WithManifest {
            payload: &report,
            manifest: manifest.embedded(),
        },
    )?;
    write_csv(&prefixed(&a.out, ".csv")?, &report)?;
    recorder.finish(&manifest, &prefixed(&a.out, ".manifest.json")?)?;
    print_table(&report);
    Ok(())
}
