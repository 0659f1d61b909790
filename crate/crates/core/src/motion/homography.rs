use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PointMatch;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

const RANSAC_SEED: u64 = 0x5eed_ba5e;

/// Projective map between consecutive frames, scaled so that `h[2][2] = 1`
/// whenever that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub h: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        let mut h = Matrix3::identity();
        h[(0, 2)] = tx;
        h[(1, 2)] = ty;
        Self { h }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    /// Normalizes scale and rejects singular matrices.
    pub fn from_matrix(mut h: Matrix3<f64>) -> Result<Self> {
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateGeometry);
        }
        let s = h[(2, 2)];
        if s.abs() > 1e-12 {
            h /= s;
        }
        if h.determinant().abs() <= 1e-12 {
            return Err(Error::DegenerateGeometry);
        }
        Ok(Self { h })
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> [f64; 2] {
        let h = &self.h;
        let w = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];
        [
            (h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)]) / w,
            (h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)]) / w,
        ]
    }

    /// `warp(x) - x`.
    #[inline]
    pub fn displacement(&self, x: f64, y: f64) -> [f64; 2] {
        let [wx, wy] = self.apply(x, y);
        [wx - x, wy - y]
    }

    pub fn inverse(&self) -> Option<Self> {
        self.h.try_inverse().and_then(|m| Self::from_matrix(m).ok())
    }
}

/// Exact homography through four correspondences, with `h33` fixed to 1.
fn four_point(matches: [&PointMatch; 4]) -> Option<Homography> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, m) in matches.iter().enumerate() {
        let [x, y] = m.from;
        let [u, v] = m.to;
        let r = 2 * i;
        a.set_row(
            r,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]),
        );
        a.set_row(
            r + 1,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]),
        );
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b)?;
    let h = Matrix3::new(sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0);
    Homography::from_matrix(h).ok()
}

/// Similarity transform moving points to zero mean and mean distance sqrt(2).
fn normalizer(points: impl Iterator<Item = [f64; 2]> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Normalized least-squares DLT over all given correspondences.
fn dlt(matches: &[&PointMatch]) -> Option<Homography> {
    let t_from = normalizer(matches.iter().map(|m| m.from))?;
    let t_to = normalizer(matches.iter().map(|m| m.to))?;
    let n = matches.len();
    let mut a = DMatrix::<f64>::zeros(2 * n.max(5), 9);
    for (i, m) in matches.iter().enumerate() {
        let p = t_from * Vector3::new(m.from[0], m.from[1], 1.0);
        let q = t_to * Vector3::new(m.to[0], m.to[1], 1.0);
        let (x, y, u, v) = (p[0], p[1], q[0], q[1]);
        let r = 2 * i;
        for (c, val) in [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u].into_iter().enumerate() {
            a[(r, c)] = val;
        }
        for (c, val) in [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v].into_iter().enumerate() {
            a[(r + 1, c)] = val;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let row = v_t.row(min_idx);
    let hn = Matrix3::from_fn(|r, c| row[3 * r + c]);
    let h = t_to.try_inverse()? * hn * t_from;
    Homography::from_matrix(h).ok()
}

/// Squared symmetric transfer error, halved so that the threshold reads as
/// an RMS distance in pixels.
#[inline]
fn transfer_error_sq(h: &Homography, h_inv: &Homography, m: &PointMatch) -> f64 {
    let f = h.apply(m.from[0], m.from[1]);
    let b = h_inv.apply(m.to[0], m.to[1]);
    let df = (f[0] - m.to[0]).powi(2) + (f[1] - m.to[1]).powi(2);
    let db = (b[0] - m.from[0]).powi(2) + (b[1] - m.from[1]).powi(2);
    0.5 * (df + db)
}

/// RANSAC over 4-point hypotheses followed by a least-squares refit on the
/// inliers of the best hypothesis.
pub fn estimate_homography(matches: &[PointMatch], config: &PipelineConfig) -> Result<Homography> {
    if matches.len() < 4 {
        return Err(Error::InsufficientMatches(matches.len()));
    }
    let threshold_sq = config.ransac_threshold * config.ransac_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(RANSAC_SEED);
    let mut best: Option<(usize, f64, Homography)> = None;
    for _ in 0..config.ransac_iterations {
        let idx = sample(&mut rng, matches.len(), 4);
        let pick = [
            &matches[idx.index(0)],
            &matches[idx.index(1)],
            &matches[idx.index(2)],
            &matches[idx.index(3)],
        ];
        let Some(h) = four_point(pick) else { continue };
        let Some(h_inv) = h.inverse() else { continue };
        let mut inliers = 0;
        let mut cost = 0.0;
        for m in matches {
            let e = transfer_error_sq(&h, &h_inv, m);
            if e <= threshold_sq {
                inliers += 1;
                cost += e;
            } else {
                cost += threshold_sq;
            }
        }
        let better = match &best {
            None => true,
            Some((n, c, _)) => inliers > *n || (inliers == *n && cost < *c),
        };
        if better {
            best = Some((inliers, cost, h));
        }
    }
    let (count, _, model) = best.ok_or(Error::DegenerateGeometry)?;
    if count < 4 {
        return Err(Error::DegenerateGeometry);
    }
    let inv = model.inverse().ok_or(Error::DegenerateGeometry)?;
    let inliers: Vec<&PointMatch> = matches
        .iter()
        .filter(|m| transfer_error_sq(&model, &inv, m) <= threshold_sq)
        .collect();
    Ok(dlt(&inliers).unwrap_or(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid_points(n: usize) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| [5.0 + (i * 37 % 310) as f64 + 0.25 * (i % 3) as f64, 4.0 + (i * 61 % 170) as f64])
            .collect()
    }

    #[test]
    fn identity_from_identity_matches() {
        let matches: Vec<_> = grid_points(40).into_iter().map(|p| PointMatch { from: p, to: p }).collect();
        let h = estimate_homography(&matches, &PipelineConfig::default()).unwrap();
        assert!((h.h - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn exact_translation() {
        let matches: Vec<_> = grid_points(40)
            .into_iter()
            .map(|p| PointMatch { from: p, to: [p[0] + 3.0, p[1]] })
            .collect();
        let h = estimate_homography(&matches, &PipelineConfig::default()).unwrap();
        let expected = Homography::translation(3.0, 0.0).h;
        for r in 0..3 {
            for c in 0..3 {
                assert!((h.h[(r, c)] - expected[(r, c)]).abs() < 1e-9, "{}", h.h);
            }
        }
    }

    #[test]
    fn recovers_translation_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let (tx, ty) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let matches: Vec<_> = (0..200)
                .map(|i| {
                    let p = [rng.random_range(0.0..320.0), rng.random_range(0.0..180.0)];
                    let to = if i % 5 == 0 {
                        [rng.random_range(0.0..320.0), rng.random_range(0.0..180.0)]
                    } else {
                        [p[0] + tx, p[1] + ty]
                    };
                    PointMatch { from: p, to }
                })
                .collect();
            let h = estimate_homography(&matches, &PipelineConfig::default()).unwrap();
            let d = mean_error(&h, tx, ty);
            assert!(d < 0.1, "trial {trial}: error {d}");
        }
    }

    fn mean_error(h: &Homography, tx: f64, ty: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for y in (0..180).step_by(20) {
            for x in (0..320).step_by(20) {
                let [dx, dy] = h.displacement(x as f64, y as f64);
                worst = worst.max(((dx - tx).powi(2) + (dy - ty).powi(2)).sqrt());
            }
        }
        worst
    }

    #[test]
    fn projective_model_is_recovered() {
        let truth =
            Homography::from_rows([[1.01, 0.02, -2.0], [-0.015, 0.98, 1.5], [2e-5, -1e-5, 1.0]]).unwrap();
        let matches: Vec<_> = grid_points(60)
            .into_iter()
            .map(|p| PointMatch { from: p, to: truth.apply(p[0], p[1]) })
            .collect();
        let h = estimate_homography(&matches, &PipelineConfig::default()).unwrap();
        assert!((h.h - truth.h).abs().max() < 1e-8);
    }

    #[test]
    fn too_few_or_degenerate() {
        let p = PointMatch { from: [1.0, 1.0], to: [1.0, 1.0] };
        assert!(matches!(
            estimate_homography(&[p.clone(), p.clone(), p.clone()], &PipelineConfig::default()),
            Err(Error::InsufficientMatches(3))
        ));
        // all points identical: no valid 4-point hypothesis
        assert!(matches!(
            estimate_homography(&vec![p; 10], &PipelineConfig::default()),
            Err(Error::DegenerateGeometry)
        ));
    }
}
