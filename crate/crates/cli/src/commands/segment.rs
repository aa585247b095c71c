use tlime_core::ingest::write_pnm_file;
use tlime_core::segmentation::segment;

use super::{ensure_parent, load_image, seg_config};
use crate::args::SegmentArgs;
use crate::error::CliResult;
use crate::manifest::{sidecar_path, Recorder, RunManifest};

pub fn run(a: &SegmentArgs, argv: Vec<String>) -> CliResult<()> {
    let recorder = Recorder::start();
    let seed = a.seed.seed;
    let mut manifest = RunManifest::new(argv, seed);
    manifest.add_input("image", &a.image)?;
    let cfg = seg_config(&a.seg, seed);
    manifest.set_config(&cfg)?;

    let image = load_image(&a.image)?;
    let seg = segment(&image, &cfg)?;
    ensure_parent(&a.out)?;
    write_pnm_file(&a.out, &seg.to_label_image())?;
    recorder.finish(&manifest, &sidecar_path(&a.out))?;
    println!("{}", seg.num_segments());
    Ok(())
}
