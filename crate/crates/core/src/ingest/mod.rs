//! Parsers for MNIST-style IDX files and binary Netpbm images.

mod idx;
mod pnm;

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

pub use idx::{parse_idx, IdxDataset, IdxKind};
pub use pnm::{parse_pnm, write_pnm};

use crate::representation::Image;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("bad IDX magic bytes {0:02x?} (expected 00 00 <dtype> <ndims>)")]
    BadMagic([u8; 4]),

    #[error("unsupported IDX element type 0x{0:02x} (only unsigned byte 0x08 is supported)")]
    UnsupportedDtype(u8),

    #[error("unsupported IDX rank {0} (expected 1 for labels or 3 for images)")]
    UnsupportedRank(u8),

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("IDX payload has {extra} trailing bytes beyond the declared dimensions")]
    TrailingBytes { extra: usize },

    #[error("IDX dimensions {0:?} overflow the addressable size")]
    DimensionOverflow(Vec<u32>),

    #[error("unsupported Netpbm magic {0:?} (expected P5 or P6)")]
    UnsupportedMagic(String),

    #[error("unsupported Netpbm maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u64),

    #[error("malformed Netpbm header: {0}")]
    MalformedHeader(String),

    #[error("corrupt gzip stream: {0}")]
    Gzip(String),

    #[error("{0}")]
    Shape(String),
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Returns `bytes` decompressed when they start with the gzip magic, unchanged otherwise.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>, IngestError> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| IngestError::Gzip(e.to_string()))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

pub fn read_idx(path: impl AsRef<Path>) -> crate::Result<IdxDataset> {
    let bytes = maybe_gunzip(std::fs::read(path)?)?;
    Ok(parse_idx(&bytes)?)
}

pub fn read_pnm(path: impl AsRef<Path>) -> crate::Result<Image> {
    Ok(parse_pnm(&std::fs::read(path)?)?)
}

pub fn write_pnm_file(path: impl AsRef<Path>, image: &Image) -> crate::Result<()> {
    std::fs::write(path, write_pnm(image))?;
    Ok(())
}
