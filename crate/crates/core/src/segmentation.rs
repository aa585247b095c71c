//! Superpixel segmentation: a rectangular grid tiling and a SLIC-style
//! k-means over (colour, position).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::{neighbors4, Image, SegmentMap};

/// Colour values are scaled into roughly the range of CIELAB lightness so that
/// the usual compactness values (around 10) balance colour against space.
const COLOR_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMethod {
    Grid,
    Slic,
}

impl std::str::FromStr for SegmentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SegmentMethod::Grid),
            "slic" => Ok(SegmentMethod::Slic),
            other => Err(Error::config(format!(
                "unknown segmentation method '{other}' (grid|slic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub method: SegmentMethod,
    pub target_segments: usize,
    /// Spatial weight `m` of the SLIC distance.
    pub compactness: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            method: SegmentMethod::Grid,
            target_segments: 16,
            compactness: 10.0,
            iterations: 10,
            seed: 0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self, pixel_count: usize) -> Result<()> {
        if self.target_segments == 0 {
            return Err(Error::config("target_segments must be at least 1"));
        }
        if self.target_segments > pixel_count {
            return Err(Error::config(format!(
                "target_segments {} exceeds pixel count {pixel_count}",
                self.target_segments
            )));
        }
        if !(self.compactness >= 0.0 && self.compactness.is_finite()) {
            return Err(Error::config(format!(
                "compactness must be finite and >= 0, got {}",
                self.compactness
            )));
        }
        Ok(())
    }
}

/// Segments `image` according to `cfg.method`.
pub fn segment(image: &Image, cfg: &SegmentationConfig) -> Result<SegmentMap> {
    match cfg.method {
        SegmentMethod::Grid => segment_grid(image, cfg.target_segments),
        SegmentMethod::Slic => segment_slic(image, cfg),
    }
}

/// Column count of each row of the grid tiling used for `target` segments.
///
/// Starts from `round(sqrt(target * H / W))` rows and picks the divisor of
/// `target` nearest to it (smaller on ties) whose blocks still fit the image,
/// giving a uniform `rows x cols` grid. When no divisor fits, the rows are
/// kept at that estimate (raised to `ceil(target / W)` if needed) and the
/// last `target % rows` rows get one extra column.
pub fn grid_shape(width: usize, height: usize, target: usize) -> Result<Vec<usize>> {
    if target == 0 {
        return Err(Error::config("target_segments must be at least 1"));
    }
    if target > width * height {
        return Err(Error::Segmentation(format!(
            "cannot tile {width}x{height} pixels into {target} segments"
        )));
    }
    let ideal = ((target * height) as f64 / width as f64)
        .sqrt()
        .round()
        .max(1.0) as usize;
    let uniform = (1..=target)
        .filter(|r| target % r == 0 && *r <= height && target / r <= width)
        .min_by_key(|r| (r.abs_diff(ideal), *r));
    if let Some(rows) = uniform {
        return Ok(vec![target / rows; rows]);
    }
    let rows = ideal.min(height).min(target).max(target.div_ceil(width));
    let (q, rem) = (target / rows, target % rows);
    Ok((0..rows)
        .map(|r| if r >= rows - rem { q + 1 } else { q })
        .collect())
}

/// Start offsets of `parts` blocks covering `len`; the remainder joins the last block.
fn block_starts(len: usize, parts: usize) -> Vec<usize> {
    let size = len / parts;
    (0..parts).map(|i| i * size).collect()
}

fn block_index(pos: usize, len: usize, parts: usize) -> usize {
    (pos / (len / parts)).min(parts - 1)
}

/// Rectangular block tiling with row-major segment ids.
pub fn segment_grid(image: &Image, target_segments: usize) -> Result<SegmentMap> {
    let (w, h) = (image.width(), image.height());
    let cols = grid_shape(w, h, target_segments)?;
    let first_id: Vec<usize> = cols
        .iter()
        .scan(0, |acc, &c| {
            let id = *acc;
            *acc += c;
            Some(id)
        })
        .collect();
    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        let r = block_index(y, h, cols.len());
        for x in 0..w {
            labels.push((first_id[r] + block_index(x, w, cols[r])) as u32);
        }
    }
    SegmentMap::new(w, h, labels)
}

#[derive(Debug, Clone)]
struct Center {
    x: f64,
    y: f64,
    color: Vec<f64>,
}

/// Initial SLIC centres: the centroids of the grid tiling's blocks, with the
/// block's mean colour.
fn initial_centers(image: &Image, target: usize) -> Result<Vec<Center>> {
    let (w, h) = (image.width(), image.height());
    let cols = grid_shape(w, h, target)?;
    let rows = cols.len();
    let ys = block_starts(h, rows);
    let mut centers = Vec::with_capacity(target);
    for r in 0..rows {
        let y0 = ys[r];
        let y1 = if r + 1 == rows { h } else { ys[r + 1] };
        let xs = block_starts(w, cols[r]);
        for c in 0..cols[r] {
            let x0 = xs[c];
            let x1 = if c + 1 == cols[r] { w } else { xs[c + 1] };
            let mut color = vec![0.0; image.channels()];
            for y in y0..y1 {
                for x in x0..x1 {
                    for (acc, v) in color.iter_mut().zip(image.pixel(y * w + x)) {
                        *acc += v * COLOR_SCALE;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            color.iter_mut().for_each(|v| *v /= n);
            centers.push(Center {
                x: (x0 + x1 - 1) as f64 / 2.0,
                y: (y0 + y1 - 1) as f64 / 2.0,
                color,
            });
        }
    }
    Ok(centers)
}

/// SLIC superpixels followed by connectivity enforcement.
///
/// The clustering is a deterministic function of the image and the
/// configuration: centres start on the grid tiling, pixels are assigned to the
/// nearest centre within a `2S` window (falling back to a global search for
/// pixels no window reaches) and ties go to the lower centre index.
pub fn segment_slic(image: &Image, cfg: &SegmentationConfig) -> Result<SegmentMap> {
    cfg.validate(image.pixel_count())?;
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let mut centers = initial_centers(image, cfg.target_segments)?;
    let step = (n as f64 / centers.len() as f64).sqrt();
    let spatial = cfg.compactness / step;
    let window = (2.0 * step).ceil() as isize;

    let dist = |c: &Center, idx: usize| -> f64 {
        let (px, py) = ((idx % w) as f64, (idx / w) as f64);
        let dc: f64 = c
            .color
            .iter()
            .zip(image.pixel(idx))
            .map(|(a, b)| (a - b * COLOR_SCALE).powi(2))
            .sum();
        let ds = (c.x - px).powi(2) + (c.y - py).powi(2);
        dc + ds * spatial * spatial
    };

    let mut labels = vec![u32::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..cfg.iterations.max(1) {
        labels.fill(u32::MAX);
        best.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let cx = c.x.round() as isize;
            let cy = c.y.round() as isize;
            let y0 = (cy - window).max(0) as usize;
            let y1 = ((cy + window) as usize).min(h - 1);
            let x0 = (cx - window).max(0) as usize;
            let x1 = ((cx + window) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let idx = y * w + x;
                    let d = dist(c, idx);
                    if d < best[idx] {
                        best[idx] = d;
                        labels[idx] = k as u32;
                    }
                }
            }
        }
        for idx in 0..n {
            if labels[idx] == u32::MAX {
                let (k, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, dist(c, idx)))
                    .fold(
                        (0, f64::INFINITY),
                        |acc, cur| if cur.1 < acc.1 { cur } else { acc },
                    );
                labels[idx] = k as u32;
            }
        }

        let channels = image.channels();
        let mut sums = vec![(0.0, 0.0, vec![0.0; channels], 0usize); centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s.0 += (idx % w) as f64;
            s.1 += (idx / w) as f64;
            for (acc, v) in s.2.iter_mut().zip(image.pixel(idx)) {
                *acc += v * COLOR_SCALE;
            }
            s.3 += 1;
        }
        for (c, (sx, sy, sc, cnt)) in centers.iter_mut().zip(sums) {
            // Empty clusters keep their last position and may pick up pixels later.
            if cnt > 0 {
                let m = cnt as f64;
                c.x = sx / m;
                c.y = sy / m;
                c.color = sc.into_iter().map(|v| v / m).collect();
            }
        }
    }

    let min_size = n as f64 / cfg.target_segments as f64 / 4.0;
    let labels = enforce_connectivity(w, h, &labels, cfg.target_segments, min_size);
    SegmentMap::new(w, h, labels)
}

/// 4-connected components of a label image: (component id per pixel, component label, size).
fn components(w: usize, h: usize, labels: &[u32]) -> (Vec<usize>, Vec<u32>, Vec<usize>) {
    let n = labels.len();
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbors4(p, w, h) {
                if comp[q] == usize::MAX && labels[q] == l {
                    comp[q] = id;
                    queue.push_back(q);
                }
            }
        }
        comp_label.push(l);
        comp_size.push(size);
    }
    (comp, comp_label, comp_size)
}

/// Rewrites `labels` so that every segment is one 4-connected region, with at
/// most `max_segments` segments and ids compacted in raster order.
///
/// Each label keeps its largest component. Other components, and kept ones
/// smaller than `min_size`, are absorbed into the largest adjacent segment;
/// orphans of at least `min_size` pixels become segments of their own while
/// the segment budget allows.
pub(crate) fn enforce_connectivity(
    w: usize,
    h: usize,
    labels: &[u32],
    max_segments: usize,
    min_size: f64,
) -> Vec<u32> {
    let (comp, comp_label, comp_size) = components(w, h, labels);
    let ncomp = comp_label.len();

    let mut adjacency = vec![Vec::new(); ncomp];
    for p in 0..labels.len() {
        for q in neighbors4(p, w, h) {
            let (a, b) = (comp[p], comp[q]);
            if a != b && !adjacency[a].contains(&b) {
                adjacency[a].push(b);
            }
        }
    }

    let num_labels = comp_label
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    let mut primary = vec![usize::MAX; num_labels];
    for c in 0..ncomp {
        let l = comp_label[c] as usize;
        if primary[l] == usize::MAX || comp_size[c] > comp_size[primary[l]] {
            primary[l] = c;
        }
    }
    let largest = (0..ncomp)
        .max_by_key(|&c| (comp_size[c], std::cmp::Reverse(c)))
        .unwrap_or(0);

    let mut kept = vec![false; ncomp];
    let mut kept_count = 0;
    for c in 0..ncomp {
        let is_primary = primary[comp_label[c] as usize] == c;
        if c == largest || (is_primary && comp_size[c] as f64 >= min_size) {
            kept[c] = true;
            kept_count += 1;
        }
    }
    for c in 0..ncomp {
        let is_primary = primary[comp_label[c] as usize] == c;
        if !kept[c] && !is_primary && comp_size[c] as f64 >= min_size && kept_count < max_segments {
            kept[c] = true;
            kept_count += 1;
        }
    }

    // group[c] = kept component that c has been merged into
    let mut group: Vec<usize> = (0..ncomp)
        .map(|c| if kept[c] { c } else { usize::MAX })
        .collect();
    let mut group_size: Vec<usize> = comp_size.clone();
    loop {
        let candidate = (0..ncomp)
            .filter(|&c| {
                group[c] == usize::MAX && adjacency[c].iter().any(|&a| group[a] != usize::MAX)
            })
            .min_by_key(|&c| (comp_size[c], c));
        let Some(c) = candidate else { break };
        let target = adjacency[c]
            .iter()
            .filter(|&&a| group[a] != usize::MAX)
            .map(|&a| group[a])
            .max_by_key(|&g| (group_size[g], std::cmp::Reverse(g)))
            .expect("candidate has a grouped neighbour");
        group[c] = target;
        group_size[target] += comp_size[c];
    }

    let mut new_id = vec![u32::MAX; ncomp];
    let mut next = 0u32;
    comp.iter()
        .map(|&c| {
            let g = group[c];
            if new_id[g] == u32::MAX {
                new_id[g] = next;
                next += 1;
            }
            new_id[g]
        })
        .collect()
}
