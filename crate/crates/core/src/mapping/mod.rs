//! Per-pixel targetness by nearest-candidate assignment, threshold masks,
//! and pixel-level ROC AUC.

use std::path::Path;

use rayon::prelude::*;

use crate::candidates::Trajectory;
use crate::error::{Error, Result};
use crate::video_io::{write_pgm16, write_pgm8};

/// Scores for one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetnessMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl TargetnessMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// 16-bit PGM with `score * 65535`, rounded.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let data: Vec<u16> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        write_pgm16(path, self.width, self.height, &data)
    }
}

/// Distance from `pixel` to the trajectory's point at frame `t`, or
/// infinity when the trajectory is not alive at `t`.
pub fn candidate_distance(pixel: [f64; 2], t: usize, traj: &Trajectory) -> f64 {
    match traj.point_at(t) {
        Some(p) => {
            let dx = pixel[0] - p[0] as f64;
            let dy = pixel[1] - p[1] as f64;
            (dx * dx + dy * dy).sqrt()
        }
        None => f64::INFINITY,
    }
}

/// Map for frame `t`: each pixel takes the score of the nearest candidate
/// alive at `t` when it is within `radius`, otherwise 0. Equal distances go
/// to the lower candidate index.
pub fn build_map(
    t: usize,
    trajectories: &[&Trajectory],
    scores: &[f64],
    width: usize,
    height: usize,
    radius: f64,
) -> TargetnessMap {
    let mut map = TargetnessMap::zeros(width, height);
    let mut nearest = vec![f64::INFINITY; width * height];
    for (traj, &score) in trajectories.iter().zip(scores) {
        let Some(p) = traj.point_at(t) else { continue };
        let (px, py) = (p[0] as f64, p[1] as f64);
        let x0 = (px - radius).floor().max(0.0) as usize;
        let y0 = (py - radius).floor().max(0.0) as usize;
        let x1 = ((px + radius).ceil().max(0.0) as usize).min(width.saturating_sub(1));
        let y1 = ((py + radius).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        if x0 >= width || y0 >= height {
            continue;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = candidate_distance([x as f64, y as f64], t, traj);
                let i = y * width + x;
                // strict comparison keeps the earlier (lower-index) writer on ties
                if d <= radius && d < nearest[i] {
                    nearest[i] = d;
                    map.data[i] = score;
                }
            }
        }
    }
    map
}

/// Maps for several frames in parallel.
pub fn build_maps(
    frames: &[usize],
    trajectories: &[&Trajectory],
    scores: &[f64],
    width: usize,
    height: usize,
    radius: f64,
) -> Vec<TargetnessMap> {
    frames
        .par_iter()
        .map(|&t| build_map(t, trajectories, scores, width, height, radius))
        .collect()
}

/// `map >= threshold`, per pixel.
pub fn export_mask(map: &TargetnessMap, threshold: f64) -> Vec<bool> {
    map.data.iter().map(|&v| v >= threshold).collect()
}

/// Binary mask as an 8-bit PGM (0 or 255).
pub fn write_mask_pgm(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let data: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_pgm8(path, width, height, &data)
}

/// Rank-based ROC AUC (Mann-Whitney U with midranks for ties).
pub fn pixel_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateTruth);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.par_sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let mid = (i + 1 + j) as f64 / 2.0;
        let hits = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * hits as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Pooled AUC over several frames of maps and aligned truth masks.
pub fn maps_auc(maps: &[TargetnessMap], truths: &[Vec<bool>]) -> Result<f64> {
    if maps.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} maps vs {} truth masks",
            maps.len(),
            truths.len()
        )));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (m, t) in maps.iter().zip(truths) {
        if m.data.len() != t.len() {
            return Err(Error::DimensionMismatch("map and truth mask differ in size".into()));
        }
        scores.extend_from_slice(&m.data);
        labels.extend_from_slice(t);
    }
    pixel_auc(&scores, &labels)
}
