#![allow(dead_code)]

pub mod checks;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlime_core::ingest::read_idx;
use tlime_core::representation::{BinaryInstance, Image};
use tlime_core::sampling::{PerturbationRecord, PerturbationSet, PERTURBATION_FORMAT_VERSION};

pub const TRAIN: usize = 2000;
pub const TEST: usize = 1000;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The bundled 5000-digit subset: first 2000 train, next 1000 test.
pub fn mnist() -> (Vec<Image>, Vec<usize>) {
    let images = read_idx(data_dir().join("mnist5k-images-idx3-ubyte.gz"))
        .unwrap()
        .images()
        .unwrap();
    let labels = read_idx(data_dir().join("mnist5k-labels-idx1-ubyte.gz"))
        .unwrap()
        .labels()
        .unwrap()
        .into_iter()
        .map(usize::from)
        .collect();
    (images, labels)
}

pub fn split(
    images: &[Image],
    labels: &[usize],
) -> ((Vec<Image>, Vec<usize>), (Vec<Image>, Vec<usize>)) {
    let train = (images[..TRAIN].to_vec(), labels[..TRAIN].to_vec());
    let test = (
        images[TRAIN..TRAIN + TEST].to_vec(),
        labels[TRAIN..TRAIN + TEST].to_vec(),
    );
    (train, test)
}

/// Random database with small integer-ish targets so ties and repeated rows
/// occur often.
pub fn random_set(rng: &mut ChaCha8Rng, max_features: usize, max_rows: usize) -> PerturbationSet {
    let d = rng.gen_range(1..=max_features);
    let n = rng.gen_range(2..=max_rows);
    let discrete = rng.gen_bool(0.5);
    let records = (0..n)
        .map(|_| {
            let zprime = BinaryInstance::new((0..d).map(|_| rng.gen_bool(0.5)).collect());
            let fz = if discrete {
                f64::from(rng.gen_range(0..4u8)) / 4.0
            } else {
                rng.gen::<f64>()
            };
            let weight = if rng.gen_bool(0.3) {
                1.0
            } else {
                rng.gen_range(0.01..=1.0)
            };
            PerturbationRecord {
                zprime,
                fz,
                weight,
                distance: 0.0,
            }
        })
        .collect();
    PerturbationSet {
        format_version: PERTURBATION_FORMAT_VERSION,
        num_features: d,
        target_label: 0,
        sigma_used: 1.0,
        seed: 0,
        keep_prob: 0.5,
        records,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
