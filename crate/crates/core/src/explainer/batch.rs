use rayon::prelude::*;

use super::report::{BatchReport, BatchRow};
use super::{compare, ExplainerConfig};
use crate::error::Result;
use crate::models::Predictor;
use crate::representation::Image;
use crate::segmentation::{segment, SegmentationConfig};

#[derive(Debug, Clone)]
pub struct BatchInstance {
    pub name: String,
    pub image: Image,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-instance seed for batch runs.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Segments and compares every instance. Instances run concurrently on the
/// current rayon pool; instance `i` uses `derive_seed(cfg.seed, i)` for both
/// segmentation and sampling, so rows do not depend on scheduling. The first
/// failing instance in input order is reported.
pub fn compare_batch<P: Predictor + ?Sized>(
    instances: &[BatchInstance],
    seg_cfg: &SegmentationConfig,
    f: &P,
    cfg: &ExplainerConfig,
) -> Result<BatchReport> {
    cfg.validate()?;
    let results: Vec<Result<BatchRow>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let seed = derive_seed(cfg.seed, i as u64);
            let seg = segment(
                &inst.image,
                &SegmentationConfig {
                    seed,
                    ..seg_cfg.clone()
                },
            )?;
            let (report, _, _) = compare(
                &inst.image,
                &seg,
                f,
                &ExplainerConfig {
                    seed,
                    ..cfg.clone()
                },
            )?;
            Ok(BatchRow {
                instance: inst.name.clone(),
                seed,
                num_segments: seg.num_segments(),
                report,
            })
        })
        .collect();
    BatchReport::new(results.into_iter().collect::<Result<Vec<_>>>()?)
}
