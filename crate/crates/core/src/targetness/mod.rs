//! Candidate scoring: motion correlation against a query's ego-motion, a
//! learned generic prior, and their product.
//!
//! The score is the unnormalized product `likelihood * prior`. Every use of
//! it (ranking, maps, AUC, affinities) depends only on order, so neither
//! the evidence term nor the background branch is computed.

mod prior;

pub use prior::{prior_predict, train_prior, PriorModel, MIN_SAMPLES_PER_CLASS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::error::{Error, Result};
use crate::motion::GlobalMotionPattern;

/// Channels whose standard deviation falls below this are degenerate.
pub const DEGENERATE_STD: f64 = 1e-6;

/// Zero-mean, unit-variance copy of `x` (population statistics), or all
/// zeros with `true` when the channel is degenerate.
pub fn standardize(x: &[f64]) -> (Vec<f64>, bool) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (Vec::new(), true);
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return (vec![0.0; x.len()], true);
    }
    (x.iter().map(|v| (v - mean) / std).collect(), false)
}

/// Local and global motion over the same interval, each channel
/// standardized, with the global vertical channel sign-inverted.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPatternPair {
    /// `[u, v]` of the candidate.
    pub local: [Vec<f64>; 2],
    /// `[U, V]` of the query, `V` inverted.
    pub global: [Vec<f64>; 2],
    pub local_degenerate: [bool; 2],
    pub global_degenerate: [bool; 2],
}

impl NormalizedPatternPair {
    pub fn len(&self) -> usize {
        self.local[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.local[0].is_empty()
    }

    /// Builds a pair from raw channels of equal length.
    pub fn from_raw(local: [&[f64]; 2], global: [&[f64]; 2]) -> Result<Self> {
        let l = local[0].len();
        if local[1].len() != l || global[0].len() != l || global[1].len() != l {
            return Err(Error::DimensionMismatch("pattern channels differ in length".into()));
        }
        let inverted: Vec<f64> = global[1].iter().map(|v| -v).collect();
        let (u, du) = standardize(local[0]);
        let (v, dv) = standardize(local[1]);
        let (gu, dgu) = standardize(global[0]);
        let (gv, dgv) = standardize(&inverted);
        Ok(Self {
            local: [u, v],
            global: [gu, gv],
            local_degenerate: [du, dv],
            global_degenerate: [dgu, dgv],
        })
    }
}

/// Crops the query pattern to `[begin, begin + len)` where `len` is the
/// local pattern's length, then standardizes both sides.
pub fn crop_and_normalize(
    local: &[[f32; 2]],
    global: &GlobalMotionPattern,
    begin: usize,
) -> Result<NormalizedPatternPair> {
    let end = begin + local.len();
    if end > global.len() || local.is_empty() {
        return Err(Error::OutOfRange {
            begin,
            end,
            len: global.len(),
        });
    }
    let crop = &global.vectors[begin..end];
    let lu: Vec<f64> = local.iter().map(|m| m[0] as f64).collect();
    let lv: Vec<f64> = local.iter().map(|m| m[1] as f64).collect();
    let gu: Vec<f64> = crop.iter().map(|m| m[0]).collect();
    let gv: Vec<f64> = crop.iter().map(|m| m[1]).collect();
    NormalizedPatternPair::from_raw([&lu, &lv], [&gu, &gv])
}

/// Average of the horizontal and vertical normalized correlations. A
/// degenerate channel contributes zero to its half.
pub fn zncc(pair: &NormalizedPatternPair) -> f64 {
    let l = pair.len() as f64;
    if pair.is_empty() {
        return 0.0;
    }
    let mut c = 0.0;
    for axis in 0..2 {
        if pair.local_degenerate[axis] || pair.global_degenerate[axis] {
            continue;
        }
        let dot: f64 = pair.local[axis]
            .iter()
            .zip(&pair.global[axis])
            .map(|(a, b)| a * b)
            .sum();
        c += 0.5 * dot / l;
    }
    c.clamp(-1.0, 1.0)
}

/// Full-length correlation of one candidate against the query pattern.
pub fn candidate_correlation(candidate: &Candidate, query: &GlobalMotionPattern) -> Result<f64> {
    let t = &candidate.trajectory;
    Ok(zncc(&crop_and_normalize(&t.local_motion, query, t.begin)?))
}

/// Logistic map of a correlation to (0, 1).
#[inline]
pub fn likelihood(c: f64) -> f64 {
    1.0 / (1.0 + (-c).exp())
}

#[inline]
pub fn posterior(likelihood: f64, prior: f64) -> f64 {
    likelihood * prior
}

/// Per-candidate result. `upper_bound`, `correlation` and `likelihood` are
/// absent when the corresponding stage did not run for this candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub upper_bound: Option<f64>,
    pub correlation: Option<f64>,
    pub likelihood: Option<f64>,
    pub prior: f64,
    pub posterior: f64,
}

impl CandidateScore {
    pub fn exact(correlation: f64, prior: f64) -> Self {
        let lk = likelihood(correlation);
        Self {
            upper_bound: None,
            correlation: Some(correlation),
            likelihood: Some(lk),
            prior,
            posterior: posterior(lk, prior),
        }
    }
}

/// Prior per candidate: the model's prediction, or 1 everywhere without one.
pub fn candidate_priors(candidates: &[Candidate], model: Option<&PriorModel>) -> Vec<f64> {
    match model {
        None => vec![1.0; candidates.len()],
        Some(m) => candidates.iter().map(|c| prior_predict(m, &c.features)).collect(),
    }
}

/// Exact correlation for every candidate.
pub fn score_exhaustive(
    candidates: &[Candidate],
    query: &GlobalMotionPattern,
    priors: &[f64],
) -> Result<Vec<CandidateScore>> {
    if priors.len() != candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} priors for {} candidates",
            priors.len(),
            candidates.len()
        )));
    }
    candidates
        .par_iter()
        .zip(priors)
        .map(|(c, &p)| Ok(CandidateScore::exact(candidate_correlation(c, query)?, p)))
        .collect()
}

/// Training label per candidate from binary masks given on a subset of
/// frames: positive when at least half of its points on those frames fall
/// inside the mask.
pub fn label_candidates(
    candidates: &[Candidate],
    frames: &[usize],
    masks: &[Vec<bool>],
    width: usize,
    height: usize,
) -> Result<Vec<bool>> {
    if frames.len() != masks.len() || masks.iter().any(|m| m.len() != width * height) {
        return Err(Error::DimensionMismatch("masks do not match frames or size".into()));
    }
    Ok(candidates
        .iter()
        .map(|c| {
            let (mut inside, mut total) = (0usize, 0usize);
            for (&t, mask) in frames.iter().zip(masks) {
                if let Some(p) = c.trajectory.point_at(t) {
                    let (x, y) = crate::imgproc::nearest_pixel(p[0], p[1], width, height);
                    total += 1;
                    inside += mask[y * width + x] as usize;
                }
            }
            total > 0 && 2 * inside >= total
        })
        .collect())
}

pub const SCORES_HEADER: &str = "index,b,l,UB,C,likelihood,prior,posterior";

/// One row of a scores table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub index: usize,
    pub begin: usize,
    pub length: usize,
    pub score: CandidateScore,
}

/// Scores table with one row per candidate; stages that did not run for a
/// candidate leave their cell empty.
pub fn scores_to_csv(candidates: &[Candidate], scores: &[CandidateScore]) -> String {
    use std::fmt::Write as _;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for (i, (c, s)) in candidates.iter().zip(scores).enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            c.trajectory.begin,
            c.trajectory.len(),
            cell(s.upper_bound),
            cell(s.correlation),
            cell(s.likelihood),
            s.prior,
            s.posterior
        );
    }
    out
}

pub fn read_scores_csv(path: &std::path::Path) -> Result<Vec<ScoreRow>> {
    let bad = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SCORES_HEADER => {}
        _ => return Err(bad(1, format!("expected header `{SCORES_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 8 {
                return Err(bad(i + 1, format!("expected 8 cells, got {}", cells.len())));
            }
            let int = |c: &str| c.parse::<usize>().map_err(|e| bad(i + 1, e.to_string()));
            let num = |c: &str| c.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()));
            let opt = |c: &str| if c.is_empty() { Ok(None) } else { num(c).map(Some) };
            Ok(ScoreRow {
                index: int(cells[0])?,
                begin: int(cells[1])?,
                length: int(cells[2])?,
                score: CandidateScore {
                    upper_bound: opt(cells[3])?,
                    correlation: opt(cells[4])?,
                    likelihood: opt(cells[5])?,
                    prior: num(cells[6])?,
                    posterior: num(cells[7])?,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(u: &[f64], v: &[f64], gu: &[f64], gv: &[f64]) -> NormalizedPatternPair {
        NormalizedPatternPair::from_raw([u, v], [gu, gv]).unwrap()
    }

    #[test]
    fn two_level_channel_normalizes_to_unit_square_wave() {
        let (u, d) = standardize(&[0.0, 2.0, 0.0, 2.0]);
        assert!(!d);
        assert_eq!(u, vec![-1.0, 1.0, -1.0, 1.0]);
        let p = pair(&[0.0, 2.0, 0.0, 2.0], &[0.0; 4], &[0.0; 4], &[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(p.global[1], vec![-1.0, 1.0, -1.0, 1.0]);
        assert!(p.local_degenerate[1] && p.global_degenerate[0]);
    }

    #[test]
    fn crop_checks_range() {
        let global = GlobalMotionPattern {
            vectors: vec![[1.0, 0.0]; 10],
            failed: vec![false; 10],
        };
        assert!(crop_and_normalize(&[[0.0, 0.0]; 4], &global, 6).is_ok());
        assert!(matches!(
            crop_and_normalize(&[[0.0, 0.0]; 4], &global, 7),
            Err(Error::OutOfRange { begin: 7, end: 11, len: 10 })
        ));
    }

    #[test]
    fn zncc_cases() {
        let a = [0.3, -1.2, 2.0, 0.5, -0.1];
        let b = [1.0, 0.2, -0.7, 0.4, 0.9];
        let neg_b: Vec<f64> = b.iter().map(|x| -x).collect();
        // V is inverted on the global side, so pass -v to make the pair identical
        let same = pair(&a, &b, &a, &neg_b);
        assert!((zncc(&same) - 1.0).abs() < 1e-12);
        let neg_a: Vec<f64> = a.iter().map(|x| -x).collect();
        let opposite = pair(&neg_a, &neg_b, &a, &neg_b);
        assert!((zncc(&opposite) + 1.0).abs() < 1e-12);
        let ortho = pair(&[1.0, -1.0, 1.0, -1.0], &[2.0; 4], &[1.0, 1.0, -1.0, -1.0], &[0.5, 0.1, 0.3, 0.2]);
        assert_eq!(zncc(&ortho), 0.0);
    }

    #[test]
    fn zncc_symmetries() {
        let u = [0.1, 0.9, -0.4, 0.3, 0.0, 1.5];
        let v = [1.0, -0.5, 0.2, 0.1, 0.8, -0.3];
        let gu = [0.2, 0.4, -0.6, 0.9, 0.3, 0.1];
        let gv = [-0.3, 0.2, 0.5, -0.1, 0.7, 0.0];
        let p = pair(&u, &v, &gu, &gv);
        let neg = |x: &[f64]| x.iter().map(|v| -v).collect::<Vec<_>>();
        let q = pair(&neg(&u), &neg(&v), &neg(&gu), &neg(&gv));
        assert!((zncc(&p) - zncc(&q)).abs() < 1e-12);
        // re-standardizing an already standardized pair changes nothing
        let mut gv_back = p.global[1].clone();
        gv_back.iter_mut().for_each(|x| *x = -*x);
        let r = pair(&p.local[0], &p.local[1], &p.global[0], &gv_back);
        assert!((zncc(&p) - zncc(&r)).abs() < 1e-12);
    }

    #[test]
    fn likelihood_and_posterior_values() {
        assert_eq!(likelihood(0.0), 0.5);
        assert!((likelihood(1.0) - 0.7310585786).abs() < 1e-9);
        assert!((likelihood(-1.0) - 0.2689414214).abs() < 1e-9);
        assert_eq!(posterior(0.5, 1.0), 0.5);
        assert_eq!(posterior(0.9, 0.0), 0.0);
        assert!((posterior(0.8, 0.5) - 0.4).abs() < 1e-15);
    }
}
