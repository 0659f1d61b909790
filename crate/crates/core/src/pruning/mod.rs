//! Piecewise-constant sketches, the correlation upper bound they imply, and
//! the two-step search that spends exact correlations only on the most
//! promising candidates.
//!
//! Sketches are built on the trajectory trimmed to a multiple of K and
//! re-standardized, so the bound holds exactly for the correlation of that
//! trimmed pair. Candidates selected in the second step get the exact
//! correlation over their full length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::motion::GlobalMotionPattern;
use crate::targetness::{candidate_correlation, standardize, CandidateScore, DEGENERATE_STD};

/// K-piece summary of a standardized two-channel motion pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaaSketch {
    pub pieces_u: Vec<f64>,
    pub pieces_v: Vec<f64>,
    pub var_u: f64,
    pub var_v: f64,
    pub trimmed_length: usize,
    pub original_length: usize,
}

impl PaaSketch {
    pub fn pieces(&self) -> usize {
        self.pieces_u.len()
    }
}

/// Segment means of `channel` trimmed to a multiple of `k`, and the
/// population variance of those means.
pub fn paa(channel: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    if k == 0 || channel.len() < k {
        return Err(Error::TooShortForK {
            len: channel.len(),
            k,
        });
    }
    let seg = channel.len() / k;
    let pieces: Vec<f64> = channel[..seg * k]
        .chunks_exact(seg)
        .map(|c| c.iter().sum::<f64>() / seg as f64)
        .collect();
    Ok((pieces.clone(), population_variance(&pieces)))
}

fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}

/// Largest multiple of `k` not exceeding `len`.
#[inline]
pub fn trimmed_length(len: usize, k: usize) -> usize {
    len / k * k
}

fn sketch_channels(u: &[f64], v: &[f64], k: usize) -> Result<PaaSketch> {
    let l = u.len();
    if k == 0 || l < k {
        return Err(Error::TooShortForK { len: l, k });
    }
    let t = trimmed_length(l, k);
    let (su, _) = standardize(&u[..t]);
    let (sv, _) = standardize(&v[..t]);
    let (pieces_u, var_u) = paa(&su, k)?;
    let (pieces_v, var_v) = paa(&sv, k)?;
    Ok(PaaSketch {
        pieces_u,
        pieces_v,
        var_u,
        var_v,
        trimmed_length: t,
        original_length: l,
    })
}

/// Sketch of a candidate's local motion.
pub fn sketch_local(local_motion: &[[f32; 2]], k: usize) -> Result<PaaSketch> {
    let u: Vec<f64> = local_motion.iter().map(|m| m[0] as f64).collect();
    let v: Vec<f64> = local_motion.iter().map(|m| m[1] as f64).collect();
    sketch_channels(&u, &v, k)
}

/// Sketch of raw global channels, with `V` inverted before standardizing.
pub fn sketch_global(u: &[f64], v: &[f64], k: usize) -> Result<PaaSketch> {
    let inverted: Vec<f64> = v.iter().map(|x| -x).collect();
    sketch_channels(u, &inverted, k)
}

/// Sketches of every candidate; `None` for candidates shorter than `k`.
pub fn sketch_candidates(candidates: &[Candidate], k: usize) -> Vec<Option<PaaSketch>> {
    candidates
        .par_iter()
        .map(|c| sketch_local(&c.trajectory.local_motion, k).ok())
        .collect()
}

/// Upper bound on the correlation of the trimmed, re-standardized patterns
/// the two sketches were built from.
pub fn upper_bound(local: &PaaSketch, global: &PaaSketch) -> Result<f64> {
    let k = local.pieces();
    if global.pieces() != k {
        return Err(Error::SketchMismatch(k, global.pieces()));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / k as f64;
    let z = 1.0 - (local.var_u + global.var_u + local.var_v + global.var_v) / 4.0;
    Ok(0.5 * (dot(&local.pieces_u, &global.pieces_u) + dot(&local.pieces_v, &global.pieces_v)) + z)
}

/// Both sides of the piecewise distance lower bound for standardized
/// channels `a` and `b` trimmed to a multiple of `k`: the mean squared
/// distance of the sequences and of their piece means. `lhs >= rhs`.
pub fn euclid_lower_bound_check(a: &[f64], b: &[f64], k: usize) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("channels differ in length".into()));
    }
    let t = trimmed_length(a.len(), k.max(1));
    let (pa, _) = paa(&a[..t], k)?;
    let (pb, _) = paa(&b[..t], k)?;
    let lhs = a[..t].iter().zip(&b[..t]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / t as f64;
    let rhs = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / k as f64;
    Ok((lhs, rhs))
}

/// Prefix sums over the query pattern so that the sketch of any crop costs
/// O(K) instead of O(crop length).
pub struct GlobalSketcher {
    sums: [Vec<f64>; 2],
    squares: [Vec<f64>; 2],
}

impl GlobalSketcher {
    pub fn new(pattern: &GlobalMotionPattern) -> Self {
        let mut sums = [vec![0.0], vec![0.0]];
        let mut squares = [vec![0.0], vec![0.0]];
        for v in &pattern.vectors {
            // vertical channel enters inverted
            for (axis, x) in [v[0], -v[1]].into_iter().enumerate() {
                let s = sums[axis].last().copied().unwrap_or(0.0);
                let q = squares[axis].last().copied().unwrap_or(0.0);
                sums[axis].push(s + x);
                squares[axis].push(q + x * x);
            }
        }
        Self { sums, squares }
    }

    pub fn len(&self) -> usize {
        self.sums[0].len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sketch of the standardized crop `[begin, begin + trimmed)`.
    pub fn sketch(&self, begin: usize, trimmed: usize, k: usize) -> Result<PaaSketch> {
        let end = begin + trimmed;
        if end > self.len() {
            return Err(Error::OutOfRange {
                begin,
                end,
                len: self.len(),
            });
        }
        if k == 0 || trimmed < k || !trimmed.is_multiple_of(k) {
            return Err(Error::TooShortForK { len: trimmed, k });
        }
        let seg = trimmed / k;
        let mut pieces = [Vec::with_capacity(k), Vec::with_capacity(k)];
        let mut vars = [0.0; 2];
        for axis in 0..2 {
            let s = &self.sums[axis];
            let q = &self.squares[axis];
            let n = trimmed as f64;
            let mean = (s[end] - s[begin]) / n;
            let var = ((q[end] - q[begin]) / n - mean * mean).max(0.0);
            let std = var.sqrt();
            if std < DEGENERATE_STD {
                pieces[axis] = vec![0.0; k];
                continue;
            }
            for j in 0..k {
                let (a, b) = (begin + j * seg, begin + (j + 1) * seg);
                pieces[axis].push(((s[b] - s[a]) / seg as f64 - mean) / std);
            }
            vars[axis] = population_variance(&pieces[axis]);
        }
        let [pieces_u, pieces_v] = pieces;
        Ok(PaaSketch {
            pieces_u,
            pieces_v,
            var_u: vars[0],
            var_v: vars[1],
            trimmed_length: trimmed,
            original_length: trimmed,
        })
    }
}

/// Multiply-adds charged per candidate in the first step: standardizing
/// 2K global pieces, their two variances, and the two K-term dot products.
pub fn step_one_cost(k: usize) -> u64 {
    6 * k as u64
}

/// Number of candidates that receive an exact correlation.
pub fn selection_count(n: usize, top_percent: f64) -> usize {
    let raw = top_percent / 100.0 * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepResult {
    pub scores: Vec<CandidateScore>,
    pub exact_evaluations: usize,
    pub step_one_multiply_adds: u64,
}

/// Upper bound for every candidate, then exact correlation for the top
/// `top_percent` of them by bound (ties: longer trajectory, then lower
/// index). Everything else scores 0.
pub fn two_step_scores(
    candidates: &[Candidate],
    sketches: &[Option<PaaSketch>],
    query: &GlobalMotionPattern,
    priors: &[f64],
    k: usize,
    top_percent: f64,
) -> Result<TwoStepResult> {
    let n = candidates.len();
    if sketches.len() != n || priors.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} candidates, {} sketches, {} priors",
            sketches.len(),
            priors.len()
        )));
    }
    let sketcher = GlobalSketcher::new(query);
    let bounds: Vec<f64> = candidates
        .par_iter()
        .zip(sketches)
        .map(|(c, s)| match s {
            None => Ok(f64::INFINITY),
            Some(s) => {
                if s.pieces() != k {
                    return Err(Error::SketchMismatch(s.pieces(), k));
                }
                let g = sketcher.sketch(c.trajectory.begin, s.trimmed_length, k)?;
                upper_bound(s, &g)
            }
        })
        .collect::<Result<_>>()?;
    let step_one_multiply_adds = sketches.iter().flatten().count() as u64 * step_one_cost(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        bounds[b]
            .total_cmp(&bounds[a])
            .then(candidates[b].trajectory.len().cmp(&candidates[a].trajectory.len()))
            .then(a.cmp(&b))
    });
    let m = selection_count(n, top_percent);
    let mut selected = vec![false; n];
    for &i in &order[..m] {
        selected[i] = true;
    }
    let scores = (0..n)
        .into_par_iter()
        .map(|i| {
            let ub = Some(bounds[i]).filter(|b| b.is_finite());
            if selected[i] {
                let mut s = CandidateScore::exact(candidate_correlation(&candidates[i], query)?, priors[i]);
                s.upper_bound = ub;
                Ok(s)
            } else {
                Ok(CandidateScore {
                    upper_bound: ub,
                    correlation: None,
                    likelihood: None,
                    prior: priors[i],
                    posterior: 0.0,
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(TwoStepResult {
        scores,
        exact_evaluations: m,
        step_one_multiply_adds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targetness::{zncc, NormalizedPatternPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = 0.9 * x + rng.random_range(-1.0..1.0);
                x
            })
            .collect()
    }

    #[test]
    fn paa_cases() {
        assert_eq!(paa(&[1.0, 1.0, 3.0, 3.0], 2).unwrap().0, vec![1.0, 3.0]);
        let (s, _) = standardize(&[0.3, -1.0, 2.0, 0.7, 1.1]);
        let (pieces, var) = paa(&s, 5).unwrap();
        assert_eq!(pieces, s);
        assert!((var - 1.0).abs() < 1e-12);
        let x: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.1).collect();
        let (pieces, _) = paa(&x, 4).unwrap();
        for j in 0..4 {
            let want = (x[2 * j] + x[2 * j + 1]) / 2.0;
            assert!((pieces[j] - want).abs() < 1e-9);
        }
        assert!(matches!(paa(&x, 11), Err(Error::TooShortForK { len: 10, k: 11 })));
    }

    #[test]
    fn bound_is_exact_at_full_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let l = rng.random_range(4..80);
            let (u, v, gu, gv) = (
                random_walk(&mut rng, l),
                random_walk(&mut rng, l),
                random_walk(&mut rng, l),
                random_walk(&mut rng, l),
            );
            let ls = sketch_channels(&u, &v, l).unwrap();
            let gs = sketch_global(&gu, &gv, l).unwrap();
            let c = zncc(&NormalizedPatternPair::from_raw([&u, &v], [&gu, &gv]).unwrap());
            assert!((upper_bound(&ls, &gs).unwrap() - c).abs() < 1e-9);
            let same = sketch_channels(&u, &v, l).unwrap();
            assert!((upper_bound(&ls, &same).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bound_dominates_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let (u, v, gu, gv) = (
                random_walk(&mut rng, 64),
                random_walk(&mut rng, 64),
                random_walk(&mut rng, 64),
                random_walk(&mut rng, 64),
            );
            let ub = upper_bound(&sketch_channels(&u, &v, 8).unwrap(), &sketch_global(&gu, &gv, 8).unwrap()).unwrap();
            let c = zncc(&NormalizedPatternPair::from_raw([&u, &v], [&gu, &gv]).unwrap());
            assert!(ub >= c - 1e-9, "{ub} < {c}");
        }
    }

    #[test]
    fn mismatched_pieces_fail() {
        let a = sketch_channels(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 0.0], 2).unwrap();
        let b = sketch_channels(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 0.0], 4).unwrap();
        assert!(matches!(upper_bound(&a, &b), Err(Error::SketchMismatch(2, 4))));
    }

    #[test]
    fn lower_bound_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, _) = standardize(&random_walk(&mut rng, 32));
        assert_eq!(euclid_lower_bound_check(&a, &a, 4).unwrap(), (0.0, 0.0));
        let (b, _) = standardize(&random_walk(&mut rng, 32));
        let (lhs, rhs) = euclid_lower_bound_check(&a, &b, 32).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        for _ in 0..10_000 {
            let (a, _) = standardize(&random_walk(&mut rng, 48));
            let (b, _) = standardize(&random_walk(&mut rng, 48));
            let (lhs, rhs) = euclid_lower_bound_check(&a, &b, 6).unwrap();
            assert!(lhs >= rhs - 1e-12);
        }
    }

    #[test]
    fn prefix_sketch_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_walk(&mut rng, 300);
        let v = random_walk(&mut rng, 300);
        let pattern = GlobalMotionPattern {
            vectors: u.iter().zip(&v).map(|(a, b)| [*a, *b]).collect(),
            failed: vec![false; 300],
        };
        let sketcher = GlobalSketcher::new(&pattern);
        for (begin, trimmed, k) in [(0, 64, 8), (17, 128, 16), (100, 200, 4), (236, 64, 64)] {
            let fast = sketcher.sketch(begin, trimmed, k).unwrap();
            let slow = sketch_global(&u[begin..begin + trimmed], &v[begin..begin + trimmed], k).unwrap();
            for (a, b) in fast.pieces_u.iter().chain(&fast.pieces_v).zip(slow.pieces_u.iter().chain(&slow.pieces_v)) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((fast.var_u - slow.var_u).abs() < 1e-9 && (fast.var_v - slow.var_v).abs() < 1e-9);
        }
        assert!(sketcher.sketch(250, 64, 8).is_err());
    }

    #[test]
    fn selection_count_rule() {
        assert_eq!(selection_count(100, 25.0), 25);
        assert_eq!(selection_count(101, 25.0), 26);
        assert_eq!(selection_count(7, 100.0), 7);
        assert_eq!(selection_count(3, 1.0), 1);
        assert_eq!(selection_count(0, 25.0), 0);
    }
}
