use super::IngestError;
use crate::representation::Image;

const UNSIGNED_BYTE: u8 = 0x08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxKind {
    Images,
    Labels,
}

/// A decoded IDX file: unsigned-byte tensor with its dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxDataset {
    pub kind: IdxKind,
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

/// Parses an (uncompressed) IDX buffer.
///
/// Layout: `00 00 <dtype> <ndims>`, then `ndims` big-endian `u32` sizes, then
/// the row-major payload whose length must equal the product of the sizes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxDataset, IngestError> {
    let Some(magic) = bytes.get(..4) else {
        return Err(IngestError::Truncated {
            what: "IDX magic",
            expected: 4,
            found: bytes.len(),
        });
    };
    let magic: [u8; 4] = magic.try_into().expect("four bytes");
    if magic[0] != 0 || magic[1] != 0 {
        return Err(IngestError::BadMagic(magic));
    }
    if magic[2] != UNSIGNED_BYTE {
        return Err(IngestError::UnsupportedDtype(magic[2]));
    }
    let kind = match magic[3] {
        1 => IdxKind::Labels,
        3 => IdxKind::Images,
        other => return Err(IngestError::UnsupportedRank(other)),
    };
    let ndims = magic[3] as usize;
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(IngestError::Truncated {
            what: "IDX header",
            expected: header_len,
            found: bytes.len(),
        });
    }
    let raw_dims: Vec<u32> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("four bytes")))
        .collect();
    let dims: Vec<usize> = raw_dims.iter().map(|&d| d as usize).collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| IngestError::DimensionOverflow(raw_dims.clone()))?;
    let payload = &bytes[header_len..];
    if payload.len() < expected {
        return Err(IngestError::Truncated {
            what: "IDX payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IngestError::TrailingBytes {
            extra: payload.len() - expected,
        });
    }
    Ok(IdxDataset {
        kind,
        dims,
        payload: payload.to_vec(),
    })
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.dims[0] == 0
    }

    /// Grayscale images, each byte normalised to `b / 255`.
    pub fn images(&self) -> Result<Vec<Image>, IngestError> {
        if self.kind != IdxKind::Images {
            return Err(IngestError::Shape(
                "IDX file holds labels, not images".into(),
            ));
        }
        let (rows, cols) = (self.dims[1], self.dims[2]);
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if rows * cols == 0 {
            return Err(IngestError::Shape("IDX images have zero area".into()));
        }
        self.payload
            .chunks_exact(rows * cols)
            .map(|chunk| {
                Image::from_bytes(cols, rows, 1, chunk)
                    .map_err(|e| IngestError::Shape(e.to_string()))
            })
            .collect()
    }

    pub fn image(&self, index: usize) -> Result<Image, IngestError> {
        if self.kind != IdxKind::Images {
            return Err(IngestError::Shape(
                "IDX file holds labels, not images".into(),
            ));
        }
        if index >= self.len() {
            return Err(IngestError::Shape(format!(
                "image index {index} out of range ({} images)",
                self.len()
            )));
        }
        let (rows, cols) = (self.dims[1], self.dims[2]);
        let chunk = &self.payload[index * rows * cols..(index + 1) * rows * cols];
        Image::from_bytes(cols, rows, 1, chunk).map_err(|e| IngestError::Shape(e.to_string()))
    }

    pub fn labels(&self) -> Result<Vec<u8>, IngestError> {
        if self.kind != IdxKind::Labels {
            return Err(IngestError::Shape(
                "IDX file holds images, not labels".into(),
            ));
        }
        Ok(self.payload.clone())
    }
}
