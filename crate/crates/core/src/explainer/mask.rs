use crate::error::{Error, Result};
use crate::representation::{Image, SegmentMap};

const DIM_FACTOR: f64 = 0.25;

/// Overlay that keeps the listed segments and dims everything else.
pub fn explanation_mask(x: &Image, seg: &SegmentMap, features: &[usize]) -> Result<Image> {
    seg.check_image(x)?;
    let mut keep = vec![false; seg.num_segments()];
    for &f in features {
        *keep.get_mut(f).ok_or_else(|| {
            Error::dim(format!(
                "feature {f} out of range for {} segments",
                seg.num_segments()
            ))
        })? = true;
    }
    let c = x.channels();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if keep[seg.labels()[i / c] as usize] {
                v
            } else {
                v * DIM_FACTOR
            }
        })
        .collect();
    Image::new(x.width(), x.height(), c, data)
}
