use std::fs;

use serde::Serialize;
use tlime_core::ingest::{read_idx, write_pnm_file};

use crate::args::ExtractArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{Recorder, RunManifest};

#[derive(Serialize)]
struct ExtractConfig {
    start: usize,
    count: usize,
}

pub fn run(a: &ExtractArgs, argv: Vec<String>) -> CliResult<()> {
    let recorder = Recorder::start();
    let mut manifest = RunManifest::new(argv, 0);
    manifest.set_config(&ExtractConfig {
        start: a.start,
        count: a.count,
    })?;
    manifest.add_input("images", &a.images)?;
    let images = read_idx(&a.images).map_err(|e| CliError::from(e).context(a.images.display()))?;
    let end = a.start.saturating_add(a.count).min(images.len());
    if a.start >= end {
        return Err(CliError::data(format!(
            "nothing to extract: start {} with {} images",
            a.start,
            images.len()
        )));
    }
    let labels = match &a.labels {
        Some(p) => {
            manifest.add_input("labels", p)?;
            let l = read_idx(p)
                .map_err(|e| CliError::from(e).context(p.display()))?
                .labels()?;
            if l.len() != images.len() {
                return Err(CliError::data(format!(
                    "{} images but {} labels",
                    images.len(),
                    l.len()
                )));
            }
            Some(l)
        }
        None => None,
    };

    fs::create_dir_all(&a.out_dir)?;
    let mut index = String::from("file,label\n");
    for i in a.start..end {
        let name = format!("{i:05}.pgm");
        write_pnm_file(a.out_dir.join(&name), &images.image(i)?)?;
        if let Some(l) = &labels {
            index.push_str(&format!("{name},{}\n", l[i]));
        }
    }
    if labels.is_some() {
        fs::write(a.out_dir.join("labels.csv"), index)?;
    }
    recorder.finish(&manifest, &a.out_dir.join("extract.manifest.json"))?;
    println!("wrote {} images to {}", end - a.start, a.out_dir.display());
    Ok(())
}
