//! Coarse-to-fine dense flow: per-pixel Lucas-Kanade with warping.
//!
//! Every iteration warps the later frame by the current flow, linearizes the
//! brightness constraint around each pixel's own flow, and solves the
//! window-summed 2x2 normal equations for the full displacement.

use super::{FlowField, PreparedFrame};
use crate::imgproc::Plane;
use crate::video_io::Frame;

const COARSE_ITERATIONS: usize = 5;
const FINE_ITERATIONS: usize = 3;
/// Tikhonov term pulling each solution toward the current flow; keeps flat
/// regions at their initial estimate instead of blowing up.
const REGULARIZATION: f32 = 1e-4;

pub fn dense_flow(prev: &Frame, next: &Frame) -> FlowField {
    dense_flow_prepared(&PreparedFrame::new(prev), &PreparedFrame::new(next))
}

pub fn dense_flow_prepared(prev: &PreparedFrame, next: &PreparedFrame) -> FlowField {
    let levels = prev.pyramid.len().min(next.pyramid.len());
    let mut flow: Option<FlowField> = None;
    for level in (0..levels).rev() {
        let (w, h) = (prev.pyramid[level].width, prev.pyramid[level].height);
        let mut current = match flow.take() {
            None => FlowField::zeros(w, h),
            Some(coarse) => upsample(&coarse, w, h),
        };
        let iterations = if level + 1 == levels {
            COARSE_ITERATIONS
        } else {
            FINE_ITERATIONS
        };
        refine_level(
            &prev.pyramid[level],
            &next.pyramid[level],
            &prev.gradients[level],
            &next.gradients[level],
            &mut current,
            iterations,
        );
        flow = Some(current);
    }
    flow.expect("at least one level")
}

fn upsample(coarse: &FlowField, width: usize, height: usize) -> FlowField {
    let mut out = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let (cx, cy) = (x as f32 * 0.5, y as f32 * 0.5);
            out.u.data[y * width + x] = 2.0 * coarse.u.sample(cx, cy);
            out.v.data[y * width + x] = 2.0 * coarse.v.sample(cx, cy);
        }
    }
    out
}

/// Triangular window sum (a radius-2 box applied twice, 9 taps per axis)
/// with clamped borders. Its frequency response is non-negative, which
/// keeps the per-pixel warping iteration from amplifying high-frequency
/// flow errors the way a plain box does.
fn window_sum(plane: &Plane) -> Plane {
    const TAPS: [f32; 9] = [1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0];
    const R: usize = 4;
    let (w, h) = (plane.width, plane.height);
    let mut horiz = Plane::new(w, h);
    let mut padded = vec![0f32; w + 2 * R];
    for y in 0..h {
        let row = &plane.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[(i as isize - R as isize).clamp(0, w as isize - 1) as usize];
        }
        let dst = &mut horiz.data[y * w..(y + 1) * w];
        for (k, &tap) in TAPS.iter().enumerate() {
            for (d, &p) in dst.iter_mut().zip(&padded[k..k + w]) {
                *d += tap * p;
            }
        }
    }
    let mut out = Plane::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (k, &tap) in TAPS.iter().enumerate() {
            let yy = (y as isize + k as isize - R as isize).clamp(0, h as isize - 1) as usize;
            for (d, &p) in dst.iter_mut().zip(&horiz.data[yy * w..(yy + 1) * w]) {
                *d += tap * p;
            }
        }
    }
    out
}

fn refine_level(
    i0: &Plane,
    i1: &Plane,
    gradients0: &(Plane, Plane),
    gradients1: &(Plane, Plane),
    flow: &mut FlowField,
    iterations: usize,
) {
    let (gx0, gy0) = gradients0;
    let (gx1p, gy1p) = gradients1;
    let (w, h) = (i0.width, i0.height);
    let n = w * h;
    let mut planes: Vec<Plane> = (0..5).map(|_| Plane::new(w, h)).collect();
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (px, py) = (x as f32 + flow.u.data[i], y as f32 + flow.v.data[i]);
                // the later frame and its gradient at the warped position; the
                // gradient is averaged with the earlier frame's so both images
                // contribute symmetrically
                let [warped, gx1, gy1] = sample3([i1, gx1p, gy1p], px, py);
                let gx = 0.5 * (gx0.data[i] + gx1);
                let gy = 0.5 * (gy0.data[i] + gy1);
                // linearized constraint g . d = g . d(x) - (I1(x + d(x)) - I0(x))
                let rhs = gx * flow.u.data[i] + gy * flow.v.data[i] - (warped - i0.data[i]);
                planes[0].data[i] = gx * gx;
                planes[1].data[i] = gx * gy;
                planes[2].data[i] = gy * gy;
                planes[3].data[i] = gx * rhs;
                planes[4].data[i] = gy * rhs;
            }
        }
        let sums: Vec<Plane> = planes.iter().map(window_sum).collect();
        for i in 0..n {
            let a = sums[0].data[i] + REGULARIZATION;
            let b = sums[1].data[i];
            let c = sums[2].data[i] + REGULARIZATION;
            let det = a * c - b * b;
            let rx = sums[3].data[i] + REGULARIZATION * flow.u.data[i];
            let ry = sums[4].data[i] + REGULARIZATION * flow.v.data[i];
            flow.u.data[i] = (c * rx - b * ry) / det;
            flow.v.data[i] = (a * ry - b * rx) / det;
        }
    }
}

/// Bilinear samples of three same-sized planes at one position.
#[inline]
fn sample3(planes: [&Plane; 3], x: f32, y: f32) -> [f32; 3] {
    let (w, h) = (planes[0].width, planes[0].height);
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let (xf, yf) = (x.floor(), y.floor());
    let (ax, ay) = (x - xf, y - yf);
    let (x0, y0) = (xf as usize, yf as usize);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (r0, r1) = (y0 * w, y1 * w);
    planes.map(|p| {
        let d = &p.data;
        let top = d[r0 + x0] + ax * (d[r0 + x1] - d[r0 + x0]);
        let bottom = d[r1 + x0] + ax * (d[r1 + x1] - d[r1 + x0]);
        top + ay * (bottom - top)
    })
}
