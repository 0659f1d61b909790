//! Ego-motion and local motion estimation.
//!
//! Global motion between consecutive frames is modeled as a homography fit
//! to sparse tracks; its per-frame average is the video's global motion
//! pattern. Local motion is dense optical flow minus the homography-induced
//! flow at the same pixel.

mod cache;
mod dense;
mod homography;
mod sparse;

pub use cache::{flow_cache_path, read_flow, write_flow, FlowHeader, FLOW_MAGIC};
pub use dense::{dense_flow, dense_flow_prepared};
pub use homography::{estimate_homography, Homography};
pub use sparse::{sparse_flow, sparse_flow_prepared, PointMatch};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imgproc::{self, Plane};
use crate::video_io::{Frame, FrameSource};

/// Pyramid levels shared by sparse and dense flow.
pub const PYRAMID_LEVELS: usize = 3;

/// Per-pixel displacement from frame t to t+1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Plane,
    pub v: Plane,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Plane::new(width, height),
            v: Plane::new(width, height),
        }
    }

    pub fn width(&self) -> usize {
        self.u.width
    }

    pub fn height(&self) -> usize {
        self.u.height
    }

    /// Bilinearly interpolated displacement at a subpixel position.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> [f32; 2] {
        [self.u.sample(x, y), self.v.sample(x, y)]
    }
}

/// A frame with the pyramid, gradients and corner response precomputed, so
/// that sparse flow, dense flow and trajectory seeding can share them.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub pyramid: Vec<Plane>,
    pub gradients: Vec<(Plane, Plane)>,
    pub min_eigenvalue: Plane,
}

impl PreparedFrame {
    pub fn new(frame: &Frame) -> Self {
        let pyramid = imgproc::pyramid(&frame.gray, PYRAMID_LEVELS, 16);
        let gradients = pyramid.iter().map(imgproc::central_gradients).collect();
        let min_eigenvalue = imgproc::min_eigenvalue_map(&frame.gray);
        Self {
            pyramid,
            gradients,
            min_eigenvalue,
        }
    }

    pub fn width(&self) -> usize {
        self.pyramid[0].width
    }

    pub fn height(&self) -> usize {
        self.pyramid[0].height
    }
}

/// Homography-induced flow: `warp(x; h) - x` at every pixel.
pub fn global_motion_field(h: &Homography, width: usize, height: usize) -> FlowField {
    let mut field = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let [dx, dy] = h.displacement(x as f64, y as f64);
            field.u.data[y * width + x] = dx as f32;
            field.v.data[y * width + x] = dy as f32;
        }
    }
    field
}

/// Mean homography-induced displacement over all pixels of a frame.
pub fn mean_displacement(h: &Homography, width: usize, height: usize) -> [f64; 2] {
    let mut acc = [0.0f64; 2];
    for y in 0..height {
        for x in 0..width {
            let [dx, dy] = h.displacement(x as f64, y as f64);
            acc[0] += dx;
            acc[1] += dy;
        }
    }
    let n = (width * height) as f64;
    [acc[0] / n, acc[1] / n]
}

/// Pointwise `flow - global`.
pub fn local_motion(flow: &FlowField, global: &FlowField) -> Result<FlowField> {
    if (flow.width(), flow.height()) != (global.width(), global.height()) {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} vs global {}x{}",
            flow.width(),
            flow.height(),
            global.width(),
            global.height()
        )));
    }
    let sub = |a: &Plane, b: &Plane| Plane {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    };
    Ok(FlowField {
        u: sub(&flow.u, &global.u),
        v: sub(&flow.v, &global.v),
    })
}

/// Per-transition ego-motion of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMotionPattern {
    /// `(U_t, V_t)` in pixels/frame, one per frame transition.
    pub vectors: Vec<[f64; 2]>,
    /// Transitions where no homography could be estimated; their vector is zero.
    pub failed: Vec<bool>,
}

impl GlobalMotionPattern {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn median_filtered(&self, window: usize) -> Result<Self> {
        Ok(Self {
            vectors: median_filter_pattern(&self.vectors, window)?,
            failed: self.failed.clone(),
        })
    }

    pub fn channel(&self, axis: usize) -> Vec<f64> {
        self.vectors.iter().map(|v| v[axis]).collect()
    }
}

/// Writes a pattern as CSV with columns `t,u,v,failed`.
pub fn write_pattern_csv(path: &Path, pattern: &GlobalMotionPattern) -> Result<()> {
    let mut text = String::from("t,u,v,failed\n");
    for (t, (v, f)) in pattern.vectors.iter().zip(&pattern.failed).enumerate() {
        let _ = writeln!(text, "{t},{},{},{}", v[0], v[1], *f as u8);
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_pattern_csv(path: &Path) -> Result<GlobalMotionPattern> {
    let bad = |line: usize, message: &str| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "t,u,v,failed" => {}
        _ => return Err(bad(1, "expected header `t,u,v,failed`")),
    }
    let mut pattern = GlobalMotionPattern {
        vectors: Vec::new(),
        failed: Vec::new(),
    };
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 4 || cells[0].parse::<usize>().ok() != Some(pattern.len()) {
            return Err(bad(i + 1, "expected `t,u,v,failed` with consecutive t"));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|e| bad(i + 1, &e.to_string()));
        pattern.vectors.push([num(cells[1])?, num(cells[2])?]);
        pattern.failed.push(cells[3] == "1");
    }
    Ok(pattern)
}

/// Estimates the homography between two prepared frames, or `None` when
/// tracking or fitting fails.
pub fn frame_homography(
    prev: &PreparedFrame,
    next: &PreparedFrame,
    config: &PipelineConfig,
) -> Option<Homography> {
    let matches = sparse_flow_prepared(prev, next, config).ok()?;
    estimate_homography(&matches, config).ok()
}

/// Global motion pattern of a whole video. Transitions whose homography
/// cannot be estimated contribute `(0, 0)` and are flagged.
pub fn global_motion_pattern(
    video: &dyn FrameSource,
    config: &PipelineConfig,
) -> Result<GlobalMotionPattern> {
    let count = video.frame_count();
    if count < 2 {
        return Err(Error::SequenceTooShort(count));
    }
    let (width, height) = video.size();
    let per_transition = (0..count - 1)
        .into_par_iter()
        .map(|t| -> Result<Option<[f64; 2]>> {
            let prev = PreparedFrame::new(&*video.frame(t)?);
            let next = PreparedFrame::new(&*video.frame(t + 1)?);
            Ok(frame_homography(&prev, &next, config).map(|h| mean_displacement(&h, width, height)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pattern_from_transitions(per_transition))
}

pub(crate) fn pattern_from_transitions(items: Vec<Option<[f64; 2]>>) -> GlobalMotionPattern {
    let failed = items.iter().map(Option::is_none).collect();
    let vectors = items.into_iter().map(|v| v.unwrap_or([0.0, 0.0])).collect();
    GlobalMotionPattern { vectors, failed }
}

/// Per-channel sliding median with edge replication. The window must be odd.
pub fn median_filter_pattern<T>(pattern: &[[T; 2]], window: usize) -> Result<Vec<[T; 2]>>
where
    T: Copy + PartialOrd,
{
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    let n = pattern.len();
    if window == 1 || n == 0 {
        return Ok(pattern.to_vec());
    }
    let half = (window / 2) as isize;
    let mut buf: Vec<T> = Vec::with_capacity(window);
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        let mut item = pattern[i as usize];
        for (axis, slot) in item.iter_mut().enumerate() {
            buf.clear();
            for k in i - half..=i + half {
                let idx = k.clamp(0, n as isize - 1) as usize;
                buf.push(pattern[idx][axis]);
            }
            buf.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            *slot = buf[window / 2];
        }
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::evalsynth::ValueNoise;

    /// Value-noise texture sampled with an offset, so that `offset` moves the
    /// content by `+offset` pixels.
    pub fn textured(width: usize, height: usize, offset: [f64; 2], seed: u64) -> Frame {
        let coarse = ValueNoise::new(seed, 14.0);
        let fine = ValueNoise::new(seed ^ 0xabcdef, 5.0);
        let gray = Plane::from_fn(width, height, |x, y| {
            let sx = x as f64 - offset[0];
            let sy = y as f64 - offset[1];
            (0.15 + 0.45 * coarse.sample(sx, sy) + 0.4 * fine.sample(sx, sy)) as f32
        });
        Frame::from_gray(gray)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::textured;
    use super::*;
    use crate::video_io::FrameSequence;

    #[test]
    fn median_filter_cases() {
        let constant = vec![[2.0f64, -1.0]; 9];
        assert_eq!(median_filter_pattern(&constant, 5).unwrap(), constant);
        let mut impulse = vec![[0.0f64, 0.0]; 9];
        impulse[4] = [10.0, -10.0];
        assert!(median_filter_pattern(&impulse, 5)
            .unwrap()
            .iter()
            .all(|v| *v == [0.0, 0.0]));
        let seq: Vec<[f64; 2]> = (0..7).map(|i| [i as f64, (i * i) as f64]).collect();
        assert_eq!(median_filter_pattern(&seq, 1).unwrap(), seq);
        assert!(matches!(median_filter_pattern(&seq, 4), Err(Error::EvenWindow(4))));
    }

    #[test]
    fn median_filter_idempotent_on_monotone() {
        let seq: Vec<[f64; 2]> = (0..30).map(|i| [i as f64 * 0.3, -(i as f64).sqrt()]).collect();
        let once = median_filter_pattern(&seq, 5).unwrap();
        assert_eq!(once, seq);
        assert_eq!(median_filter_pattern(&once, 5).unwrap(), once);
    }

    #[test]
    fn local_motion_is_difference() {
        let mut flow = FlowField::zeros(4, 3);
        let mut global = FlowField::zeros(4, 3);
        flow.u.data.fill(3.0);
        flow.v.data.fill(1.0);
        global.u.data.fill(3.0);
        let local = local_motion(&flow, &global).unwrap();
        assert!(local.u.data.iter().all(|&v| v == 0.0));
        assert!(local.v.data.iter().all(|&v| v == 1.0));
        assert_eq!(local_motion(&flow, &flow).unwrap(), FlowField::zeros(4, 3));
        assert!(local_motion(&flow, &FlowField::zeros(3, 3)).is_err());
    }

    #[test]
    fn local_motion_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut a = FlowField::zeros(13, 7);
        let mut b = FlowField::zeros(13, 7);
        for p in [&mut a.u, &mut a.v, &mut b.u, &mut b.v] {
            p.data.iter_mut().for_each(|v| *v = rng.random_range(-5.0..5.0));
        }
        let local = local_motion(&a, &b).unwrap();
        for y in 0..7 {
            for x in 0..13 {
                assert_eq!(local.u.at(x, y), a.u.at(x, y) - b.u.at(x, y));
                assert_eq!(local.v.at(x, y), a.v.at(x, y) - b.v.at(x, y));
            }
        }
    }

    #[test]
    fn global_field_cases() {
        let id = global_motion_field(&Homography::identity(), 10, 8);
        assert!(id.u.data.iter().chain(&id.v.data).all(|&v| v == 0.0));
        let tr = global_motion_field(&Homography::translation(3.0, 0.0), 10, 8);
        assert!(tr.u.data.iter().all(|&v| v == 3.0));
        assert!(tr.v.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_field_projective_matches_hand_warp() {
        let m = [[1.02, 0.01, 1.5], [-0.02, 0.99, -0.5], [1e-3, -2e-3, 1.0]];
        let h = Homography::from_rows(m).unwrap();
        let field = global_motion_field(&h, 4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let (xf, yf) = (x as f64, y as f64);
                let w = m[2][0] * xf + m[2][1] * yf + m[2][2];
                let wx = (m[0][0] * xf + m[0][1] * yf + m[0][2]) / w;
                let wy = (m[1][0] * xf + m[1][1] * yf + m[1][2]) / w;
                assert!((field.u.at(x, y) as f64 - (wx - xf)).abs() < 1e-5);
                assert!((field.v.at(x, y) as f64 - (wy - yf)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn identity_matches_give_zero_field() {
        let matches: Vec<PointMatch> = (0..30)
            .map(|i| {
                let p = [(i * 37 % 300) as f64 + 3.0, (i * 53 % 170) as f64 + 2.0];
                PointMatch { from: p, to: p }
            })
            .collect();
        let h = estimate_homography(&matches, &PipelineConfig::default()).unwrap();
        let field = global_motion_field(&h, 32, 18);
        assert!(field.u.data.iter().chain(&field.v.data).all(|v| v.abs() < 1e-9));
    }

    fn shifted_video(shifts: &[[f64; 2]]) -> FrameSequence {
        let mut offset = [0.0, 0.0];
        let mut frames = vec![textured(160, 96, offset, 3)];
        for s in shifts {
            offset[0] += s[0];
            offset[1] += s[1];
            frames.push(textured(160, 96, offset, 3));
        }
        FrameSequence::new(frames, 60.0, "shift").unwrap()
    }

    #[test]
    fn static_video_has_zero_pattern() {
        let video = shifted_video(&[[0.0, 0.0]; 4]);
        let pattern = global_motion_pattern(&video, &PipelineConfig::default()).unwrap();
        assert_eq!(pattern.len(), 4);
        for v in &pattern.vectors {
            assert!(v[0].abs() < 1e-6 && v[1].abs() < 1e-6, "{v:?}");
        }
        assert!(pattern.failed.iter().all(|f| !f));
    }

    #[test]
    fn shifted_texture_pattern_follows_shift() {
        let shifts = [[1.5, -0.5], [-2.0, 1.0], [0.7, 2.2], [3.0, 0.0], [-1.2, -1.7]];
        let video = shifted_video(&shifts);
        let pattern = global_motion_pattern(&video, &PipelineConfig::default()).unwrap();
        assert_eq!(pattern.len(), video.frames.len() - 1);
        for (got, want) in pattern.vectors.iter().zip(&shifts) {
            assert!((got[0] - want[0]).abs() < 0.25, "{got:?} vs {want:?}");
            assert!((got[1] - want[1]).abs() < 0.25, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn translation_homography_mean_is_exact() {
        for (tx, ty) in [(3.0, 0.0), (-1.25, 2.5)] {
            let mean = mean_displacement(&Homography::translation(tx, ty), 320, 180);
            assert!((mean[0] - tx).abs() < 1e-12 && (mean[1] - ty).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_frames_flag_failure() {
        let flat = Frame::from_gray(Plane::filled(64, 48, 0.5));
        let video = FrameSequence::new(vec![flat.clone(), flat.clone(), flat], 60.0, "flat").unwrap();
        let pattern = global_motion_pattern(&video, &PipelineConfig::default()).unwrap();
        assert_eq!(pattern.vectors, vec![[0.0, 0.0]; 2]);
        assert_eq!(pattern.failed, vec![true, true]);
    }
}
