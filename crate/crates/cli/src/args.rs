use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tlime_core::explainer::TargetLabel;
use tlime_core::sampling::Sigma;
use tlime_core::segmentation::SegmentMethod;

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tlime",
    version,
    about = "Local decision-tree explanations for image classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the random forest on an IDX image/label pair and report test metrics.
    TrainRf(TrainArgs),
    /// Segment one image and write the label map as a P5 file.
    Segment(SegmentArgs),
    /// Explain one prediction with a decision-tree surrogate.
    Explain(ExplainArgs),
    /// Tree against linear surrogate on one or many images.
    Compare(CompareArgs),
    /// Answer prediction requests for a forest on stdin/stdout.
    Serve(ServeArgs),
    /// Export images from an IDX file as PGM.
    ExtractIdx(ExtractArgs),
    /// Rerun the command recorded in a manifest or output file.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Seed for every random choice of this run.
    #[arg(long, env = "TLIME_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 50, value_parser = positive)]
    pub trees: usize,
    #[arg(long, default_value_t = 12)]
    pub max_depth: usize,
    /// Fraction of the (limited) data used for training; the rest is the test set.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    /// Use only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Class count; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SegArgs {
    #[arg(long, default_value = "grid")]
    pub method: SegmentMethod,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub segments: usize,
    /// SLIC spatial weight.
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub slic_iterations: usize,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub seg: SegArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictorArgs {
    /// Forest model JSON written by train-rf.
    #[arg(long, conflicts_with = "external")]
    pub model: Option<PathBuf>,
    /// Shell command of an external predictor speaking line-delimited JSON.
    #[arg(long)]
    pub external: Option<String>,
    /// Seconds to wait for external predictor responses.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Number of external predictor processes.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub workers: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainOpts {
    /// Perturbations per instance.
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub samples: usize,
    /// Kernel width, or `auto` for the median sample distance.
    #[arg(long, default_value = "auto")]
    pub sigma: Sigma,
    #[arg(long, default_value_t = 0.5)]
    pub keep_prob: f64,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub max_depth: usize,
    /// Accept the first depth whose prediction error is below this.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Class to explain, or `auto` for the top prediction.
    #[arg(long, default_value = "auto")]
    pub label: TargetLabel,
    /// Ridge penalty of the linear baseline.
    #[arg(long, default_value_t = 0.01)]
    pub ridge_lambda: f64,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[command(flatten)]
    pub seg: SegArgs,
    #[command(flatten)]
    pub opts: ExplainOpts,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output prefix: writes <prefix>.json, <prefix>.dot and <prefix>-mask.pgm/ppm.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, conflicts_with = "instances")]
    pub image: Option<PathBuf>,
    /// Directory of .pgm/.ppm files, or a text file listing one image path per line.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[command(flatten)]
    pub seg: SegArgs,
    #[command(flatten)]
    pub opts: ExplainOpts,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Concurrent instances; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output prefix: writes <prefix>.json and <prefix>.csv.
    #[arg(long)]
    pub out: String,
    /// CSV of fx,tree_gx,linear_gx rows reported as-is instead of running explainers.
    #[arg(long, hide = true, conflicts_with_all = ["image", "instances"])]
    pub inject: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// Optional label file; writes labels.csv next to the images.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A `.manifest.json` sidecar or any JSON output with an embedded manifest.
    pub manifest: PathBuf,
}
