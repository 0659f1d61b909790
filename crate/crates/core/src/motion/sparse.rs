use super::PreparedFrame;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imgproc::{self, Plane};
use crate::video_io::Frame;

/// A tracked point: position in the earlier frame and in the later one.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatch {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

impl PointMatch {
    pub fn displacement(&self) -> [f64; 2] {
        [self.to[0] - self.from[0], self.to[1] - self.from[1]]
    }
}

const WINDOW_RADIUS: isize = 4;
const GRID_STEP: usize = 16;
const MAX_ITERATIONS: usize = 20;
const FORWARD_BACKWARD_LIMIT: f64 = 1.0;

/// Pyramidal Lucas-Kanade tracking of good features between two frames.
/// Only tracks whose forward-backward error is under one pixel survive.
pub fn sparse_flow(prev: &Frame, next: &Frame, config: &PipelineConfig) -> Result<Vec<PointMatch>> {
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Err(Error::DimensionMismatch("sparse flow frames differ in size".into()));
    }
    sparse_flow_prepared(&PreparedFrame::new(prev), &PreparedFrame::new(next), config)
}

pub fn sparse_flow_prepared(
    prev: &PreparedFrame,
    next: &PreparedFrame,
    config: &PipelineConfig,
) -> Result<Vec<PointMatch>> {
    let features = feature_points(&prev.min_eigenvalue, config.gftt_min_eigenvalue);
    let (w, h) = (prev.width() as f64, prev.height() as f64);
    let matches: Vec<PointMatch> = features
        .into_iter()
        .filter_map(|p| {
            let q = track(prev, next, p)?;
            if q[0] < 0.0 || q[1] < 0.0 || q[0] > w - 1.0 || q[1] > h - 1.0 {
                return None;
            }
            let back = track(next, prev, q)?;
            let fb = ((back[0] - p[0]).powi(2) + (back[1] - p[1]).powi(2)).sqrt();
            (fb < FORWARD_BACKWARD_LIMIT).then_some(PointMatch { from: p, to: q })
        })
        .collect();
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches(matches.len()));
    }
    Ok(matches)
}

/// Regular grid of corner-like points, away from the border.
fn feature_points(min_eig: &Plane, threshold: f64) -> Vec<[f64; 2]> {
    let margin = WINDOW_RADIUS as usize + 1;
    let mut out = Vec::new();
    let mut y = GRID_STEP / 2;
    while y + margin < min_eig.height {
        let mut x = GRID_STEP / 2;
        while x + margin < min_eig.width {
            if y >= margin && x >= margin && min_eig.at(x, y) as f64 >= threshold {
                out.push([x as f64, y as f64]);
            }
            x += GRID_STEP;
        }
        y += GRID_STEP;
    }
    out
}

/// Tracks one point from `a` to `b`; `None` if the window is untextured or
/// the iteration leaves the image.
fn track(a: &PreparedFrame, b: &PreparedFrame, p: [f64; 2]) -> Option<[f64; 2]> {
    let levels = a.pyramid.len().min(b.pyramid.len());
    let side = (2 * WINDOW_RADIUS + 1) as usize;
    let n = side * side;
    let mut tmpl = vec![0f32; n];
    let mut gxs = vec![0f32; n];
    let mut gys = vec![0f32; n];
    let mut guess = [0f32; 2];
    for level in (0..levels).rev() {
        let scale = 1.0 / (1 << level) as f32;
        let px = p[0] as f32 * scale;
        let py = p[1] as f32 * scale;
        let (img_a, img_b) = (&a.pyramid[level], &b.pyramid[level]);
        let (gx, gy) = &a.gradients[level];
        let (mut sxx, mut sxy, mut syy) = (0f32, 0f32, 0f32);
        let mut k = 0;
        for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
            for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                let (x, y) = (px + dx as f32, py + dy as f32);
                tmpl[k] = img_a.sample(x, y);
                gxs[k] = gx.sample(x, y);
                gys[k] = gy.sample(x, y);
                sxx += gxs[k] * gxs[k];
                sxy += gxs[k] * gys[k];
                syy += gys[k] * gys[k];
                k += 1;
            }
        }
        if imgproc::min_eigenvalue(sxx, sxy, syy) / (n as f32) < 1e-7 {
            return None;
        }
        let det = sxx * syy - sxy * sxy;
        let mut d = [0f32; 2];
        for _ in 0..MAX_ITERATIONS {
            let (cx, cy) = (px + guess[0] + d[0], py + guess[1] + d[1]);
            if cx < -1.0 || cy < -1.0 || cx > img_b.width as f32 || cy > img_b.height as f32 {
                return None;
            }
            let (mut bx, mut by) = (0f32, 0f32);
            let mut k = 0;
            for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
                for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                    let diff = tmpl[k] - img_b.sample(cx + dx as f32, cy + dy as f32);
                    bx += diff * gxs[k];
                    by += diff * gys[k];
                    k += 1;
                }
            }
            let step = [(syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det];
            d[0] += step[0];
            d[1] += step[1];
            if step[0] * step[0] + step[1] * step[1] < 1e-4 {
                break;
            }
        }
        guess = if level > 0 {
            [2.0 * (guess[0] + d[0]), 2.0 * (guess[1] + d[1])]
        } else {
            [guess[0] + d[0], guess[1] + d[1]]
        };
    }
    let q = [p[0] + guess[0] as f64, p[1] + guess[1] as f64];
    q.iter().all(|v| v.is_finite()).then_some(q)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::textured;
    use super::*;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn identical_frames_give_zero_displacement() {
        let f = textured(160, 96, [0.0, 0.0], 1);
        let matches = sparse_flow(&f, &f, &PipelineConfig::default()).unwrap();
        assert!(matches.len() >= 4);
        for m in &matches {
            let d = m.displacement();
            assert!(d[0].abs() < 1e-6 && d[1].abs() < 1e-6, "{d:?}");
        }
    }

    #[test]
    fn shift_right_by_three() {
        let a = textured(200, 120, [0.0, 0.0], 2);
        let b = textured(200, 120, [3.0, 0.0], 2);
        let matches = sparse_flow(&a, &b, &PipelineConfig::default()).unwrap();
        let dx = median(matches.iter().map(|m| m.displacement()[0]).collect());
        let dy = median(matches.iter().map(|m| m.displacement()[1]).collect());
        assert!((dx - 3.0).abs() < 0.25 && dy.abs() < 0.25, "({dx}, {dy})");
    }

    #[test]
    fn flat_frames_fail() {
        let flat = Frame::from_gray(Plane::filled(80, 60, 0.3));
        assert!(matches!(
            sparse_flow(&flat, &flat, &PipelineConfig::default()),
            Err(Error::InsufficientMatches(0))
        ));
    }
}
