use serde::Serialize;
use tlime_core::explainer::{explain_tree, explanation_mask, ExplainerConfig};
use tlime_core::ingest::write_pnm;
use tlime_core::segmentation::{segment, SegmentationConfig};
use tlime_core::surrogate::to_dot;

use super::{
    explainer_config, load_image, load_predictor, prefixed, seconds, seg_config, write_text,
    PredictorEcho,
};
use crate::args::ExplainArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Recorder, RunManifest, WithManifest};

#[derive(Serialize)]
pub struct ExplainRun<'a> {
    pub predictor: PredictorEcho,
    pub segmentation: &'a SegmentationConfig,
    pub explainer: &'a ExplainerConfig,
}

pub fn run(a: &ExplainArgs, argv: Vec<String>) -> CliResult<()> {
    let recorder = Recorder::start();
    let seed = a.seed.seed;
    let mut manifest = RunManifest::new(argv, seed);
    manifest.add_input("image", &a.image)?;
    let seg_cfg = seg_config(&a.seg, seed);
    let cfg = explainer_config(&a.opts, seed)?;
    manifest.set_config(&ExplainRun {
        predictor: PredictorEcho::new(&a.predictor),
        segmentation: &seg_cfg,
        explainer: &cfg,
    })?;

    let x = load_image(&a.image)?;
    let f = load_predictor(&a.predictor, &x, &mut manifest)?;
    let seg = segment(&x, &seg_cfg)?;
    let e = explain_tree(&x, &seg, f.as_ref(), &cfg)?;
    let tree = e
        .tree()
        .ok_or_else(|| CliError::internal("tree explainer returned a non-tree model"))?;

    write_json(
        &prefixed(&a.out, ".json")?,
        &WithManifest {
            payload: &e,
            manifest: manifest.embedded(),
        },
    )?;
    write_text(&prefixed(&a.out, ".dot")?, &to_dot(tree))?;
    let mask = explanation_mask(&x, &seg, &e.mask_features())?;
    let ext = if mask.channels() == 1 { "pgm" } else { "ppm" };
    std::fs::write(prefixed(&a.out, &format!("-mask.{ext}"))?, write_pnm(&mask))?;
    recorder.finish(&manifest, &prefixed(&a.out, ".manifest.json")?)?;

    println!("target label  {}", e.target_label);
    println!("segments      {}", seg.num_segments());
    println!("f(x)          {:.4}", e.fx);
    println!("g(x)          {:.4}", e.gx);
    println!("error         {:.4}", e.prediction_error);
    println!("depth         {}", e.depth_used.unwrap_or(0));
    println!("fit time      {}", seconds(e.fit_time));
    Ok(())
}
