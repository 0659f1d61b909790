//! Two-class linear discriminant over candidate features, calibrated to a
//! probability with one-dimensional Gaussians on the discriminant axis.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateFeatures, FEATURE_COUNT};
use crate::error::{Error, Result};

pub const MIN_SAMPLES_PER_CLASS: usize = 12;
const RIDGE: f64 = 1e-6;

/// Trained discriminant. Feature standardization is folded into `weights`
/// and `bias`, so the projection is `z = weights . f + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Projected mean of the background class.
    pub mu0: f64,
    /// Projected mean of the target class.
    pub mu1: f64,
    /// Shared within-class variance of the projection.
    pub pooled_var: f64,
    /// Fraction of target samples in the training set.
    pub prior1: f64,
    #[serde(default)]
    pub trained_on: String,
}

impl PriorModel {
    pub fn project(&self, f: &[f64; FEATURE_COUNT]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path.as_ref())?)?;
        if model.weights.len() != FEATURE_COUNT || !(model.pooled_var > 0.0) {
            return Err(Error::Format {
                path: path.as_ref().to_path_buf(),
                message: "prior model needs 11 weights and a positive variance".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Fits the discriminant to labeled features (`true` = target).
pub fn train_prior(samples: &[(CandidateFeatures, bool)], tag: &str) -> Result<PriorModel> {
    let positives = samples.iter().filter(|s| s.1).count();
    let negatives = samples.len() - positives;
    if positives < MIN_SAMPLES_PER_CLASS || negatives < MIN_SAMPLES_PER_CLASS {
        return Err(Error::Training(format!(
            "need at least {MIN_SAMPLES_PER_CLASS} samples per class, got {positives} target and {negatives} background"
        )));
    }
    let d = FEATURE_COUNT;
    let n = samples.len() as f64;
    let rows: Vec<[f64; FEATURE_COUNT]> = samples.iter().map(|s| s.0.to_array()).collect();
    let mut center = [0.0; FEATURE_COUNT];
    let mut scale = [1.0; FEATURE_COUNT];
    for k in 0..d {
        let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let s = (rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n).sqrt();
        center[k] = m;
        if s > 0.0 {
            scale[k] = s;
        }
    }
    let std_rows: Vec<DVector<f64>> = rows
        .iter()
        .map(|r| DVector::from_fn(d, |k, _| (r[k] - center[k]) / scale[k]))
        .collect();
    let class_mean = |label: bool| {
        let (sum, count) = std_rows
            .iter()
            .zip(samples)
            .filter(|(_, s)| s.1 == label)
            .fold((DVector::zeros(d), 0usize), |(acc, c), (x, _)| (acc + x, c + 1));
        sum / count as f64
    };
    let (m0, m1) = (class_mean(false), class_mean(true));
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (x, s) in std_rows.iter().zip(samples) {
        let diff = x - if s.1 { &m1 } else { &m0 };
        cov += &diff * diff.transpose();
    }
    cov /= n - 2.0;
    for k in 0..d {
        cov[(k, k)] += RIDGE;
    }
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let w = chol.solve(&(&m1 - &m0));
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    let weights: Vec<f64> = (0..d).map(|k| w[k] / scale[k]).collect();
    let bias = -(0..d).map(|k| w[k] * center[k] / scale[k]).sum::<f64>();
    let z: Vec<f64> = std_rows.iter().map(|x| w.dot(x)).collect();
    let proj_mean = |label: bool| {
        let v: Vec<f64> = z.iter().zip(samples).filter(|(_, s)| s.1 == label).map(|(z, _)| *z).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (mu0, mu1) = (proj_mean(false), proj_mean(true));
    let pooled_var = z
        .iter()
        .zip(samples)
        .map(|(z, s)| (z - if s.1 { mu1 } else { mu0 }).powi(2))
        .sum::<f64>()
        / (n - 2.0);
    if !(pooled_var > 0.0 && pooled_var.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Ok(PriorModel {
        weights,
        bias,
        mu0,
        mu1,
        pooled_var,
        prior1: positives as f64 / n,
        trained_on: tag.to_string(),
    })
}

/// Posterior probability of the target class under the two projected
/// Gaussians with shared variance and training-frequency class priors.
pub fn prior_predict(model: &PriorModel, features: &CandidateFeatures) -> f64 {
    let z = model.project(&features.to_array());
    let log_odds = (model.prior1 / (1.0 - model.prior1)).ln()
        + ((z - model.mu0).powi(2) - (z - model.mu1).powi(2)) / (2.0 * model.pooled_var);
    1.0 / (1.0 + (-log_odds).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn feat(values: [f64; FEATURE_COUNT]) -> CandidateFeatures {
        CandidateFeatures::from_array(values)
    }

    fn one_dim(x: f64) -> CandidateFeatures {
        let mut a = [0.25; FEATURE_COUNT];
        a[0] = x;
        feat(a)
    }

    fn toy() -> Vec<(CandidateFeatures, bool)> {
        (0..20)
            .flat_map(|i| {
                let jitter = 0.01 * (i as f64 - 9.5);
                [(one_dim(1.0 + jitter), true), (one_dim(-1.0 + jitter), false)]
            })
            .collect()
    }

    #[test]
    fn separable_toy_is_classified() {
        let samples = toy();
        let model = train_prior(&samples, "toy").unwrap();
        for (f, label) in &samples {
            assert_eq!(prior_predict(&model, f) > 0.5, *label);
        }
        assert!((prior_predict(&model, &one_dim(0.0)) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn class_means_fall_on_their_sides() {
        let model = train_prior(&toy(), "toy").unwrap();
        assert!(model.pooled_var > 0.0);
        assert!(prior_predict(&model, &one_dim(1.0)) > 0.5);
        assert!(prior_predict(&model, &one_dim(-1.0)) < 0.5);
    }

    #[test]
    fn single_class_or_too_few_fails() {
        let only: Vec<_> = toy().into_iter().map(|(f, _)| (f, true)).collect();
        assert!(matches!(train_prior(&only, "x"), Err(Error::Training(_))));
        let few: Vec<_> = toy().into_iter().take(20).collect();
        assert!(matches!(train_prior(&few, "x"), Err(Error::Training(_))));
    }

    fn gaussian_samples(seed: u64) -> Vec<(CandidateFeatures, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..200)
            .map(|i| {
                let label = i % 3 == 0;
                let mut a = [0.0; FEATURE_COUNT];
                for (k, v) in a.iter_mut().enumerate() {
                    let shift = if label { 0.3 * (k as f64 - 5.0) / 5.0 } else { 0.0 };
                    *v = shift + (1.0 + 0.1 * k as f64) * noise.sample(&mut rng);
                }
                (feat(a), label)
            })
            .collect()
    }

    #[test]
    fn matches_direct_gaussian_bayes_rule() {
        let samples = gaussian_samples(3);
        let model = train_prior(&samples, "gauss").unwrap();
        let pdf = |z: f64, mu: f64| {
            (-(z - mu).powi(2) / (2.0 * model.pooled_var)).exp()
                / (2.0 * std::f64::consts::PI * model.pooled_var).sqrt()
        };
        for (f, _) in &samples {
            let z = model.project(&f.to_array());
            let p1 = model.prior1 * pdf(z, model.mu1);
            let p0 = (1.0 - model.prior1) * pdf(z, model.mu0);
            let want = p1 / (p1 + p0);
            assert!((prior_predict(&model, f) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn invariant_to_rescaling_a_feature() {
        let samples = gaussian_samples(4);
        let model = train_prior(&samples, "a").unwrap();
        let rescale = |f: &CandidateFeatures| {
            let mut a = f.to_array();
            a[4] = 37.0 * a[4] - 5.0;
            feat(a)
        };
        let scaled: Vec<_> = samples.iter().map(|(f, l)| (rescale(f), *l)).collect();
        let model2 = train_prior(&scaled, "b").unwrap();
        for (f, _) in &samples {
            let a = prior_predict(&model, f);
            let b = prior_predict(&model2, &rescale(f));
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        let model = train_prior(&toy(), "toy").unwrap();
        model.save(&path).unwrap();
        assert_eq!(PriorModel::load(&path).unwrap(), model);
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["weights", "bias", "mu0", "mu1", "pooled_var", "prior1"] {
            assert!(text.contains(key));
        }
    }
}
