//! Single-channel float planes and the few filters the pipeline needs.

/// Row-major `f32` image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample with border clamping.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        let max_x = (self.width - 1) as f32;
        let max_y = (self.height - 1) as f32;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let ax = x - x0;
        let ay = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let r0 = y0 * self.width;
        let r1 = y1 * self.width;
        let top = self.data[r0 + x0] + ax * (self.data[r0 + x1] - self.data[r0 + x0]);
        let bottom = self.data[r1 + x0] + ax * (self.data[r1 + x1] - self.data[r1 + x0]);
        top + ay * (bottom - top)
    }

    /// Nearest-pixel value for a subpixel coordinate.
    #[inline]
    pub fn nearest(&self, x: f32, y: f32) -> f32 {
        let (xi, yi) = nearest_pixel(x, y, self.width, self.height);
        self.at(xi, yi)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub fn nearest_pixel(x: f32, y: f32, width: usize, height: usize) -> (usize, usize) {
    let xi = (x.round().max(0.0) as usize).min(width - 1);
    let yi = (y.round().max(0.0) as usize).min(height - 1);
    (xi, yi)
}

/// 5-tap binomial blur followed by 2x decimation.
pub fn pyr_down(src: &Plane) -> Plane {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (src.width, src.height);
    let mut horiz = Plane::new(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in K.iter().enumerate() {
                let xx = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += weight * row[xx];
            }
            horiz.data[y * w + x] = acc;
        }
    }
    let nw = w.div_ceil(2);
    let nh = h.div_ceil(2);
    let mut out = Plane::new(nw, nh);
    for ny in 0..nh {
        let y = 2 * ny;
        for nx in 0..nw {
            let x = 2 * nx;
            let mut acc = 0.0;
            for (k, weight) in K.iter().enumerate() {
                let yy = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += weight * horiz.data[yy * w + x];
            }
            out.data[ny * nw + nx] = acc;
        }
    }
    out
}

/// Gaussian pyramid, finest level first. Stops early once a level would be
/// smaller than `min_side` pixels.
pub fn pyramid(base: &Plane, levels: usize, min_side: usize) -> Vec<Plane> {
    let mut out = vec![base.clone()];
    while out.len() < levels {
        let last = out.last().expect("non-empty");
        if last.width.div_ceil(2) < min_side || last.height.div_ceil(2) < min_side {
            break;
        }
        out.push(pyr_down(last));
    }
    out
}

/// Central-difference gradients `(d/dx, d/dy)` with clamped borders.
pub fn central_gradients(src: &Plane) -> (Plane, Plane) {
    let (w, h) = (src.width, src.height);
    let mut gx = Plane::new(w, h);
    let mut gy = Plane::new(w, h);
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            gx.data[y * w + x] = 0.5 * (src.data[y * w + xp] - src.data[y * w + xm]);
            gy.data[y * w + x] = 0.5 * (src.data[yp * w + x] - src.data[ym * w + x]);
        }
    }
    (gx, gy)
}

/// Unnormalized box sum over a `(2r+1)^2` window with clamped borders.
pub fn box_sum(src: &Plane, radius: usize) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = radius as isize;
    let mut horiz = Plane::new(w, h);
    // interior columns need no clamping
    let lo = (radius + 1).min(w);
    let hi = w.saturating_sub(radius).max(lo);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let dst = &mut horiz.data[y * w..(y + 1) * w];
        let clamp = |i: isize| row[i.clamp(0, w as isize - 1) as usize];
        let mut acc: f32 = (-r..=r).map(clamp).sum();
        dst[0] = acc;
        for x in 1..lo {
            acc += clamp(x as isize + r) - clamp(x as isize - r - 1);
            dst[x] = acc;
        }
        for x in lo..hi {
            acc += row[x + radius] - row[x - radius - 1];
            dst[x] = acc;
        }
        for x in hi.max(1)..w {
            acc += clamp(x as isize + r) - clamp(x as isize - r - 1);
            dst[x] = acc;
        }
    }
    // vertical pass as a running row accumulator so memory is walked in order
    let row = |i: isize| {
        let y = i.clamp(0, h as isize - 1) as usize;
        &horiz.data[y * w..(y + 1) * w]
    };
    let mut out = Plane::new(w, h);
    let mut acc = vec![0f32; w];
    for i in -r..=r {
        for (a, v) in acc.iter_mut().zip(row(i)) {
            *a += v;
        }
    }
    out.data[..w].copy_from_slice(&acc);
    for y in 1..h as isize {
        let (add, sub) = (row(y + r), row(y - r - 1));
        for ((a, p), m) in acc.iter_mut().zip(add).zip(sub) {
            *a += p - m;
        }
        out.data[y as usize * w..(y as usize + 1) * w].copy_from_slice(&acc);
    }
    out
}

/// Minimum eigenvalue of the structure tensor at every pixel.
///
/// Derivatives are 3x3 Sobel responses scaled by 1/12 and the tensor is
/// summed over a 3x3 window, which reproduces the usual corner-min-eigenvalue
/// response for intensities in [0, 1].
pub fn min_eigenvalue_map(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let mut dxx = Plane::new(w, h);
    let mut dxy = Plane::new(w, h);
    let mut dyy = Plane::new(w, h);
    const SCALE: f32 = 1.0 / 12.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| src.at_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1))
                * SCALE;
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1))
                * SCALE;
            let i = y as usize * w + x as usize;
            dxx.data[i] = gx * gx;
            dxy.data[i] = gx * gy;
            dyy.data[i] = gy * gy;
        }
    }
    let a = box_sum(&dxx, 1);
    let b = box_sum(&dxy, 1);
    let c = box_sum(&dyy, 1);
    let mut out = Plane::new(w, h);
    for i in 0..w * h {
        out.data[i] = min_eigenvalue(a.data[i], b.data[i], c.data[i]);
    }
    out
}

/// Smaller eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
#[inline]
pub fn min_eigenvalue(a: f32, b: f32, c: f32) -> f32 {
    let half_trace = 0.5 * (a + c);
    let diff = 0.5 * (a - c);
    (half_trace - (diff * diff + b * b).sqrt()).max(0.0)
}
