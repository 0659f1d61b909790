//! Video-to-video affinity, retrieval with R-precision, and clustering by
//! affinity propagation with pairwise co-membership metrics.

mod propagation;

pub use propagation::{affinity_propagation, ClusterResult, PropagationParams};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::targetness::CandidateScore;

/// Logistic weight of a trajectory length, centered at `mu`.
#[inline]
pub fn length_weight(length: usize, mu: f64) -> f64 {
    1.0 / (1.0 + (mu - length as f64).exp())
}

/// Directed affinity: the best length-weighted value over a video's
/// candidates, 0 for an empty set. Values are likelihoods in the
/// correlation-only setting.
pub fn directed_affinity(values: impl IntoIterator<Item = (f64, usize)>, mu: f64) -> f64 {
    values
        .into_iter()
        .map(|(v, l)| v * length_weight(l, mu))
        .fold(0.0, f64::max)
}

/// Which per-candidate value feeds the directed affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinitySource {
    /// `sigma(C)` alone.
    Likelihood,
    /// `sigma(C) * prior`.
    Posterior,
}

/// Directed affinity from candidate scores. Candidates without an exact
/// correlation (pruned) contribute nothing.
pub fn directed_from_scores(
    scores: &[CandidateScore],
    lengths: &[usize],
    mu: f64,
    source: AffinitySource,
) -> f64 {
    directed_affinity(
        scores.iter().zip(lengths).map(|(s, &l)| {
            let v = match source {
                AffinitySource::Likelihood => s.likelihood.unwrap_or(0.0),
                AffinitySource::Posterior => s.likelihood.map_or(0.0, |lk| lk * s.prior),
            };
            (v, l)
        }),
        mu,
    )
}

#[inline]
pub fn symmetric_affinity(a_pq: f64, a_qp: f64) -> f64 {
    a_pq.max(a_qp)
}

/// Arithmetic mean of all candidate lengths in a repository.
pub fn mean_candidate_length(lengths: impl IntoIterator<Item = usize>) -> Result<f64> {
    let (sum, n) = lengths
        .into_iter()
        .fold((0.0, 0usize), |(s, n), l| (s + l as f64, n + 1));
    if n == 0 {
        return Err(Error::EmptyRepository);
    }
    Ok(sum / n as f64)
}

/// Video-by-video affinities. `values[p][q]`; the diagonal is 0 and unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub symmetric: bool,
}

impl AffinityMatrix {
    /// From `directed[q][p]`, the affinity of target `q` seen in observer
    /// `p`'s video. The directed matrix is returned as is (row = target);
    /// the symmetric one takes the larger direction.
    pub fn from_directed(ids: Vec<String>, directed: &[Vec<f64>], symmetric: bool) -> Result<Self> {
        let n = ids.len();
        if directed.len() != n || directed.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("affinity matrix must be square".into()));
        }
        let values = (0..n)
            .map(|p| {
                (0..n)
                    .map(|q| match (p == q, symmetric) {
                        (true, _) => 0.0,
                        (false, true) => symmetric_affinity(directed[p][q], directed[q][p]),
                        (false, false) => directed[p][q],
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            ids,
            values,
            symmetric,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// CSV with a header row of source ids followed by one row per video.
    pub fn to_csv(&self) -> String {
        let mut out = self.ids.join(",");
        out.push('\n');
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, symmetric: bool) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("affinity csv: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let ids: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let values: Vec<Vec<f64>> = lines
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|e| bad(format!("{c:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        if values.len() != ids.len() || values.iter().any(|r| r.len() != ids.len()) {
            return Err(bad("matrix is not square or does not match the header".into()));
        }
        Ok(Self {
            ids,
            values,
            symmetric,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Other videos ordered by affinity to `query`, descending; equal values
/// keep the lower index first.
pub fn retrieve(query: usize, matrix: &AffinityMatrix) -> Vec<usize> {
    let row = &matrix.values[query];
    let mut order: Vec<usize> = (0..matrix.len()).filter(|&i| i != query).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order
}

/// Fraction of relevant items among the first R of `ranked`, where R is the
/// number of relevant items.
pub fn r_precision(ranked: &[usize], relevant: &[usize]) -> Result<f64> {
    let r = relevant.len();
    if r == 0 {
        return Err(Error::NoRelevant);
    }
    let hits = ranked.iter().take(r).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / r as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub groups: usize,
}

/// Pairwise co-membership precision, recall and F-measure of a predicted
/// partition against true group labels. A ratio with an empty denominator
/// counts as 1.
pub fn clustering_metrics(predicted: &[usize], truth: &[usize]) -> Result<ClusterMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let n = predicted.len();
    let (mut both, mut pred_pairs, mut true_pairs) = (0usize, 0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let p = predicted[i] == predicted[j];
            let t = truth[i] == truth[j];
            pred_pairs += p as usize;
            true_pairs += t as usize;
            both += (p && t) as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let precision = ratio(both, pred_pairs);
    let recall = ratio(both, true_pairs);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let mut groups: Vec<usize> = predicted.to_vec();
    groups.sort_unstable();
    groups.dedup();
    Ok(ClusterMetrics {
        precision,
        recall,
        f_measure,
        groups: groups.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directed_cases() {
        assert!((directed_affinity([(0.8, 100)], 100.0) - 0.4).abs() < 1e-15);
        let a = directed_affinity([(0.9, 2000), (0.99, 10)], 500.0);
        assert!((a - 0.9).abs() < 1e-9);
        assert_eq!(directed_affinity(std::iter::empty(), 100.0), 0.0);
    }

    #[test]
    fn directed_is_monotone() {
        let base = directed_affinity([(0.6, 120), (0.7, 80)], 100.0);
        assert!(directed_affinity([(0.65, 120), (0.7, 80)], 100.0) >= base);
        assert!(directed_affinity([(0.6, 130), (0.7, 80)], 100.0) >= base);
    }

    #[test]
    fn symmetric_cases() {
        assert_eq!(symmetric_affinity(0.3, 0.7), 0.7);
        assert_eq!(symmetric_affinity(0.0, 0.0), 0.0);
        assert_eq!(symmetric_affinity(0.42, 0.42), 0.42);
    }

    #[test]
    fn mean_length_cases() {
        assert_eq!(mean_candidate_length([64, 64]).unwrap(), 64.0);
        assert_eq!(mean_candidate_length([64, 1024]).unwrap(), 544.0);
        assert!(matches!(mean_candidate_length([]), Err(Error::EmptyRepository)));
    }

    #[test]
    fn symmetric_matrix_is_transpose_invariant() {
        let d = vec![vec![0.0, 0.2, 0.9], vec![0.4, 0.0, 0.1], vec![0.3, 0.8, 0.0]];
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let m = AffinityMatrix::from_directed(ids.clone(), &d, true).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                assert_eq!(m.values[p][q], m.values[q][p]);
            }
        }
        assert_eq!(m.values[0][1], 0.4);
        let back = AffinityMatrix::from_csv(&m.to_csv(), true).unwrap();
        assert_eq!(back, m);
        let asym = AffinityMatrix::from_directed(ids, &d, false).unwrap();
        assert_eq!(asym.values[0][1], 0.2);
    }

    #[test]
    fn retrieval_cases() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let mut d = vec![vec![0.0; 5]; 5];
        d[0][3] = 0.9;
        d[0][1] = 0.8;
        let m = AffinityMatrix::from_directed(ids.clone(), &d, false).unwrap();
        let ranked = retrieve(0, &m);
        assert_eq!(ranked, vec![3, 1, 2, 4]);
        assert_eq!(r_precision(&ranked, &[1, 3]).unwrap(), 1.0);
        assert_eq!(r_precision(&ranked, &[2, 4]).unwrap(), 0.0);
        assert!(matches!(r_precision(&ranked, &[]), Err(Error::NoRelevant)));
        // all equal: order is by index, so 1 and 2 are retrieved first
        let flat = AffinityMatrix::from_directed(ids, &vec![vec![0.5; 5]; 5], true).unwrap();
        let ranked = retrieve(0, &flat);
        assert_eq!(ranked, vec![1, 2, 3, 4]);
        assert_eq!(r_precision(&ranked, &[2, 4]).unwrap(), 0.5);
    }

    #[test]
    fn metric_cases() {
        let truth = [0, 0, 1, 1, 1, 2];
        let m = clustering_metrics(&truth, &truth).unwrap();
        assert_eq!((m.precision, m.recall, m.f_measure, m.groups), (1.0, 1.0, 1.0, 3));
        let one = clustering_metrics(&[7; 6], &truth).unwrap();
        assert_eq!(one.recall, 1.0);
        assert!((one.precision - 4.0 / 15.0).abs() < 1e-15);
        let swap = clustering_metrics(&[0, 1, 1], &[0, 0, 1]).unwrap();
        assert_eq!((swap.precision, swap.recall, swap.f_measure), (0.0, 0.0, 0.0));
    }
}
