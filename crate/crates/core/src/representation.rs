//! Instances in their original pixel form and in the binary superpixel form,
//! plus the mapping between them.
//!
//! A [`SegmentMap`] partitions the pixels of an [`Image`] into `d'`
//! superpixels. A [`BinaryInstance`] of length `d'` selects which superpixels
//! are kept; [`Masker::recover`] turns it back into an image by filling the
//! absent superpixels.

use std::collections::VecDeque;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-major image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::dim(format!(
                "unsupported channel count {channels} (expected 1 or 3)"
            )));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::dim(format!(
                "image data has {} values, expected {width}x{height}x{channels} = {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::dim(format!(
                "intensity {} at index {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image from 8-bit samples, mapping `b` to `b / 255`.
    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Image::new(width, height, channels, data)
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    /// Quantizes back to 8 bits with `round(v * 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Channel values of the pixel at row-major index `idx`.
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for dim in [self.width, self.height, self.channels] {
            hasher.update((dim as u64).to_le_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Per-pixel superpixel labels in `[0, num_segments)`.
///
/// Construction validates that every id is used and that each segment is a
/// single 4-connected region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_segments: usize,
}

impl SegmentMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("segment map must be non-empty"));
        }
        if labels.len() != width * height {
            return Err(Error::dim(format!(
                "segment map has {} labels, expected {}",
                labels.len(),
                width * height
            )));
        }
        let num_segments = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        let mut seen = vec![false; num_segments];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::dim(format!(
                "segment id {missing} is unused; ids must be contiguous"
            )));
        }
        let map = SegmentMap {
            width,
            height,
            labels,
            num_segments,
        };
        if let Some(seg) = map.first_disconnected_segment() {
            return Err(Error::dim(format!("segment {seg} is not 4-connected")));
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    fn first_disconnected_segment(&self) -> Option<usize> {
        let sizes = self.segment_sizes();
        let mut visited = vec![false; self.labels.len()];
        let mut flooded = vec![false; self.num_segments];
        let mut queue = VecDeque::new();
        for start in 0..self.labels.len() {
            let seg = self.labels[start] as usize;
            if flooded[seg] {
                continue;
            }
            flooded[seg] = true;
            visited[start] = true;
            queue.push_back(start);
            let mut reached = 0;
            while let Some(p) = queue.pop_front() {
                reached += 1;
                for q in neighbors4(p, self.width, self.height) {
                    if !visited[q] && self.labels[q] as usize == seg {
                        visited[q] = true;
                        queue.push_back(q);
                    }
                }
            }
            if reached != sizes[seg] {
                return Some(seg);
            }
        }
        None
    }

    /// Per-segment mean of each channel of `image`.
    pub fn segment_means(&self, image: &Image) -> Result<Vec<Vec<f64>>> {
        self.check_image(image)?;
        let c = image.channels();
        let mut sums = vec![vec![0.0; c]; self.num_segments];
        let sizes = self.segment_sizes();
        for (idx, &l) in self.labels.iter().enumerate() {
            for (s, v) in sums[l as usize].iter_mut().zip(image.pixel(idx)) {
                *s += v;
            }
        }
        for (sum, n) in sums.iter_mut().zip(sizes) {
            for s in sum.iter_mut() {
                *s /= n as f64;
            }
        }
        Ok(sums)
    }

    pub fn check_image(&self, image: &Image) -> Result<()> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::dim(format!(
                "segment map is {}x{} but image is {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    /// Grayscale rendering of the labels, spreading ids evenly over 0..=255.
    pub fn to_label_image(&self) -> Image {
        let denom = (self.num_segments.max(2) - 1) as f64;
        let data = self
            .labels
            .iter()
            .map(|&l| (f64::from(l) * 255.0 / denom).round() / 255.0)
            .collect();
        Image::new(self.width, self.height, 1, data).expect("label image is well-formed")
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        for l in &self.labels {
            hasher.update(l.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

impl<'de> Deserialize<'de> for SegmentMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            width: usize,
            height: usize,
            labels: Vec<u32>,
        }
        let raw = Raw::deserialize(deserializer)?;
        SegmentMap::new(raw.width, raw.height, raw.labels).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn neighbors4(p: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % width, p / width);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < width).then(|| p + 1);
    let up = (y > 0).then(|| p - width);
    let down = (y + 1 < height).then(|| p + width);
    [left, right, up, down].into_iter().flatten()
}

/// Presence vector over superpixels; bit `k` refers to segment id `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryInstance(Vec<bool>);

impl BinaryInstance {
    pub fn new(bits: Vec<bool>) -> Self {
        BinaryInstance(bits)
    }

    pub fn ones(len: usize) -> Self {
        BinaryInstance(vec![true; len])
    }

    pub fn zeros(len: usize) -> Self {
        BinaryInstance(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.iter().all(|b| *b)
    }
}

impl Serialize for BinaryInstance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|&b| u8::from(b)))
    }
}

impl<'de> Deserialize<'de> for BinaryInstance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<u8>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!(
                    "bit value {other} is not 0 or 1"
                ))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(BinaryInstance)
    }
}

/// The instance itself in the binary representation: every superpixel present.
pub fn full_instance(seg: &SegmentMap) -> BinaryInstance {
    BinaryInstance::ones(seg.num_segments())
}

/// Replacement colour for superpixels switched off in a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskFill {
    /// Each absent segment takes its own mean colour in the original image.
    #[default]
    SegmentMean,
    /// Every absent pixel is set to a constant intensity.
    Constant(f64),
}

/// Maps binary instances back to images for one fixed `(image, segmentation)`.
#[derive(Debug, Clone)]
pub struct Masker<'a> {
    image: &'a Image,
    seg: &'a SegmentMap,
    fill: Vec<Vec<f64>>,
}

impl<'a> Masker<'a> {
    pub fn new(image: &'a Image, seg: &'a SegmentMap, fill: MaskFill) -> Result<Self> {
        seg.check_image(image)?;
        let fill = match fill {
            MaskFill::SegmentMean => seg.segment_means(image)?,
            MaskFill::Constant(v) => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(format!(
                        "constant mask fill {v} outside [0, 1]"
                    )));
                }
                vec![vec![v; image.channels()]; seg.num_segments()]
            }
        };
        Ok(Masker { image, seg, fill })
    }

    pub fn recover(&self, zprime: &BinaryInstance) -> Result<Image> {
        if zprime.len() != self.seg.num_segments() {
            return Err(Error::dim(format!(
                "binary instance has {} bits but the segmentation has {} segments",
                zprime.len(),
                self.seg.num_segments()
            )));
        }
        let c = self.image.channels();
        let mut data = self.image.data().to_vec();
        for (idx, &l) in self.seg.labels().iter().enumerate() {
            if !zprime.bit(l as usize) {
                data[idx * c..(idx + 1) * c].copy_from_slice(&self.fill[l as usize]);
            }
        }
        Ok(Image {
            width: self.image.width(),
            height: self.image.height(),
            channels: c,
            data,
        })
    }
}

/// Recovers `zprime` in pixel space using segment-mean masking.
pub fn recover(zprime: &BinaryInstance, x: &Image, seg: &SegmentMap) -> Result<Image> {
    Masker::new(x, seg, MaskFill::SegmentMean)?.recover(zprime)
}

/// Euclidean distance between two images of identical shape.
pub fn l2_distance(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::dim(format!(
            "cannot compare {}x{}x{} with {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let sq: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok(sq.sqrt())
}
