use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::imgproc;
use crate::video_io::FrameSource;

pub const FEATURE_COUNT: usize = 11;

/// Appearance and motion summary of one trajectory.
///
/// Flattened order: hue, saturation, value means; hue, saturation, value
/// standard deviations; u, v means; u, v standard deviations; length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub hsv_mean: [f64; 3],
    pub hsv_std: [f64; 3],
    pub motion_mean: [f64; 2],
    pub motion_std: [f64; 2],
    pub length: f64,
}

impl CandidateFeatures {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[0..3].copy_from_slice(&self.hsv_mean);
        out[3..6].copy_from_slice(&self.hsv_std);
        out[6..8].copy_from_slice(&self.motion_mean);
        out[8..10].copy_from_slice(&self.motion_std);
        out[10] = self.length;
        out
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            hsv_mean: [a[0], a[1], a[2]],
            hsv_std: [a[3], a[4], a[5]],
            motion_mean: [a[6], a[7]],
            motion_std: [a[8], a[9]],
            length: a[10],
        }
    }
}

/// Running mean/variance, shifted by the first sample so that constant
/// inputs give exactly zero spread.
#[derive(Debug, Clone, Copy, Default)]
struct ShiftedMoments {
    shift: f64,
    sum: f64,
    sum_sq: f64,
}

impl ShiftedMoments {
    fn push(&mut self, first: bool, x: f64) {
        if first {
            self.shift = x;
        }
        let d = x - self.shift;
        self.sum += d;
        self.sum_sq += d * d;
    }

    fn mean_std(&self, n: f64) -> (f64, f64) {
        let m = self.sum / n;
        let var = (self.sum_sq / n - m * m).max(0.0);
        (self.shift + m, var.sqrt())
    }
}

/// Streaming accumulator for the color part of [`CandidateFeatures`]. Hue is
/// treated as an angle on [0, 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureAccumulator {
    count: usize,
    hue_cos: f64,
    hue_sin: f64,
    sat: ShiftedMoments,
    val: ShiftedMoments,
}

impl FeatureAccumulator {
    pub fn push_hsv(&mut self, hsv: [f32; 3]) {
        let first = self.count == 0;
        let angle = TAU * hsv[0] as f64;
        self.hue_cos += angle.cos();
        self.hue_sin += angle.sin();
        self.sat.push(first, hsv[1] as f64);
        self.val.push(first, hsv[2] as f64);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Completes the feature vector with motion statistics over
    /// `local_motion`, whose length must equal the number of pushed samples.
    pub fn finish(&self, local_motion: &[[f32; 2]]) -> CandidateFeatures {
        debug_assert_eq!(local_motion.len(), self.count);
        let n = self.count.max(1) as f64;
        let (c, s) = (self.hue_cos / n, self.hue_sin / n);
        let resultant = (c * c + s * s).sqrt();
        let hue_mean = (s.atan2(c) / TAU).rem_euclid(1.0);
        // circular standard deviation, expressed in hue units
        let hue_std = if resultant >= 1.0 - 1e-12 {
            0.0
        } else {
            (-2.0 * resultant.max(1e-300).ln()).sqrt() / TAU
        };
        let (sat_mean, sat_std) = self.sat.mean_std(n);
        let (val_mean, val_std) = self.val.mean_std(n);
        let mut motion_mean = [0.0; 2];
        let mut motion_std = [0.0; 2];
        for axis in 0..2 {
            let m = local_motion.iter().map(|p| p[axis] as f64).sum::<f64>() / n;
            let var = local_motion
                .iter()
                .map(|p| (p[axis] as f64 - m).powi(2))
                .sum::<f64>()
                / n;
            motion_mean[axis] = m;
            motion_std[axis] = var.sqrt();
        }
        CandidateFeatures {
            hsv_mean: [hue_mean, sat_mean, val_mean],
            hsv_std: [hue_std, sat_std, val_std],
            motion_mean,
            motion_std,
            length: self.count as f64,
        }
    }
}

/// Recomputes a trajectory's features from the video, sampling HSV at the
/// nearest pixel of every point.
pub fn extract_features(traj: &Trajectory, video: &dyn FrameSource) -> Result<CandidateFeatures> {
    if traj.end() > video.frame_count() {
        return Err(Error::OutOfRange {
            begin: traj.begin,
            end: traj.end(),
            len: video.frame_count(),
        });
    }
    let (w, h) = video.size();
    let mut acc = FeatureAccumulator::default();
    for (i, p) in traj.points.iter().enumerate() {
        let frame = video.frame(traj.begin + i)?;
        let (x, y) = imgproc::nearest_pixel(p[0], p[1], w, h);
        acc.push_hsv(frame.hsv_at(x, y));
    }
    Ok(acc.finish(&traj.local_motion))
}
