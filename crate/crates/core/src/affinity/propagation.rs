//! Affinity propagation (responsibility/availability message passing).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    /// Self-similarity; `None` uses the median of the off-diagonal entries.
    pub preference: Option<f64>,
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay unchanged to stop.
    pub convergence_window: usize,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            preference: None,
            damping: 0.5,
            max_iter: 1000,
            convergence_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Exemplar indices, ascending.
    pub exemplars: Vec<usize>,
    /// Exemplar index of every item.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl ClusterResult {
    /// Cluster label per item: position of its exemplar in `exemplars`.
    pub fn labels(&self) -> Vec<usize> {
        self.assignment
            .iter()
            .map(|e| self.exemplars.binary_search(e).unwrap_or(0))
            .collect()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Clusters `n` items from an `n x n` similarity matrix. No random jitter is
/// added, so results are fully deterministic. When every off-diagonal
/// similarity is equal, the outcome is decided directly: one cluster unless
/// the preference exceeds the common similarity.
pub fn affinity_propagation(similarity: &[Vec<f64>], params: &PropagationParams) -> Result<ClusterResult> {
    let n = similarity.len();
    if n == 0 || similarity.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("similarity matrix must be square and non-empty".into()));
    }
    if !(0.5..1.0).contains(&params.damping) {
        return Err(Error::InvalidArgument(format!(
            "damping must be in [0.5, 1), got {}",
            params.damping
        )));
    }
    if n == 1 {
        return Ok(ClusterResult {
            exemplars: vec![0],
            assignment: vec![0],
            iterations: 0,
            converged: true,
        });
    }
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| similarity[i][j])
        .collect();
    let preference = params.preference.unwrap_or_else(|| median(off.clone()));
    if off.iter().all(|&v| v == off[0]) {
        let (exemplars, assignment) = if preference > off[0] {
            ((0..n).collect(), (0..n).collect())
        } else {
            (vec![0], vec![0; n])
        };
        return Ok(ClusterResult {
            exemplars,
            assignment,
            iterations: 0,
            converged: true,
        });
    }
    let mut s = similarity.to_vec();
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = preference;
    }
    let lambda = params.damping;
    let window = params.convergence_window.max(1);
    let mut r = vec![vec![0.0; n]; n];
    let mut a = vec![vec![0.0; n]; n];
    let mut history = vec![vec![false; window]; n];
    let mut is_exemplar = vec![false; n];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..params.max_iter {
        iterations = it + 1;
        // responsibilities
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|k| a[i][k] + s[i][k]).collect();
            let first = argmax(row.iter().copied());
            let y = row[first];
            let y2 = (0..n)
                .filter(|&k| k != first)
                .map(|k| row[k])
                .fold(f64::NEG_INFINITY, f64::max);
            for k in 0..n {
                let target = s[i][k] - if k == first { y2 } else { y };
                r[i][k] = lambda * r[i][k] + (1.0 - lambda) * target;
            }
        }
        // availabilities
        for k in 0..n {
            let col_sum: f64 = (0..n)
                .map(|i| if i == k { r[k][k] } else { r[i][k].max(0.0) })
                .sum();
            for i in 0..n {
                let own = if i == k { r[k][k] } else { r[i][k].max(0.0) };
                let mut target = col_sum - own;
                if i != k {
                    target = target.min(0.0);
                }
                a[i][k] = lambda * a[i][k] + (1.0 - lambda) * target;
            }
        }
        for i in 0..n {
            is_exemplar[i] = a[i][i] + r[i][i] > 0.0;
            history[i][it % window] = is_exemplar[i];
        }
        let count = is_exemplar.iter().filter(|&&e| e).count();
        if it >= window {
            let stable = history
                .iter()
                .all(|h| h.iter().all(|&e| e) || h.iter().all(|&e| !e));
            if stable && count > 0 {
                converged = true;
                break;
            }
        }
    }
    let mut centers: Vec<usize> = (0..n).filter(|&i| is_exemplar[i]).collect();
    if centers.is_empty() {
        return Ok(ClusterResult {
            exemplars: vec![0],
            assignment: vec![0; n],
            iterations,
            converged: false,
        });
    }
    let assign = |centers: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| match centers.iter().position(|&c| c == i) {
                Some(k) => k,
                None => argmax(centers.iter().map(|&c| s[i][c])),
            })
            .collect()
    };
    // refine each cluster's exemplar to the member with the largest
    // total similarity to the rest of the cluster
    let labels = assign(&centers);
    for (k, center) in centers.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        let best = argmax(members.iter().map(|&j| members.iter().map(|&i| s[i][j]).sum::<f64>()));
        *center = members[best];
    }
    let labels = assign(&centers);
    let assignment: Vec<usize> = labels.iter().map(|&k| centers[k]).collect();
    let mut exemplars = assignment.clone();
    exemplars.sort_unstable();
    exemplars.dedup();
    Ok(ClusterResult {
        exemplars,
        assignment,
        iterations,
        converged,
    })
}
