//! Score-level fusion of several classifiers.
//!
//! Two rules are provided: a confidence-weighted sum with weights `1 / EER_i`,
//! and the log-likelihood ratio of independent per-classifier Gaussians fitted
//! to genuine ("same") and impostor ("diff") training scores.

use crate::error::{Error, Result};

fn check_count(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::mismatch(format!("{expected} scores"), format!("{actual} scores")));
    }
    Ok(())
}

/// Per-classifier `(mean, std)` used to z-normalize scores before summing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZNorm {
    pub mean: f64,
    pub std: f64,
}

impl ZNorm {
    /// Fits mean and unbiased standard deviation; a zero spread falls back to 1.
    pub fn fit(scores: &[f64]) -> Result<ZNorm> {
        if scores.len() < 2 {
            return Err(Error::param("scores", "z-normalization needs at least 2 scores"));
        }
        let (mean, var) = mean_var(scores);
        let std = var.sqrt();
        Ok(ZNorm {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    pub fn apply(&self, s: f64) -> f64 {
        (s - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSumModel {
    eers: Vec<f64>,
    znorm: Option<Vec<ZNorm>>,
}

impl WeightedSumModel {
    pub fn new(eers: Vec<f64>) -> Result<Self> {
        if eers.is_empty() {
            return Err(Error::param("eers", "at least one classifier required"));
        }
        if let Some(bad) = eers.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
            return Err(Error::param("eers", format!("EER {bad} not in (0, 0.5]")));
        }
        Ok(WeightedSumModel { eers, znorm: None })
    }

    /// Enables per-classifier z-normalization ahead of the weighted sum.
    pub fn with_znorm(mut self, stats: Vec<ZNorm>) -> Result<Self> {
        check_count(self.eers.len(), stats.len())?;
        self.znorm = Some(stats);
        Ok(self)
    }

    pub fn eers(&self) -> &[f64] {
        &self.eers
    }

    pub fn znorm(&self) -> Option<&[ZNorm]> {
        self.znorm.as_deref()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.eers.iter().map(|e| 1.0 / e).collect()
    }

    pub fn n_classifiers(&self) -> usize {
        self.eers.len()
    }
}

/// `s = Σ s_i / EER_i`.
pub fn fuse_weighted_sum(scores: &[f64], model: &WeightedSumModel) -> Result<f64> {
    check_count(model.eers.len(), scores.len())?;
    Ok(match &model.znorm {
        None => scores.iter().zip(&model.eers).map(|(s, e)| s / e).sum(),
        Some(z) => scores
            .iter()
            .zip(&model.eers)
            .zip(z)
            .map(|((s, e), n)| n.apply(*s) / e)
            .sum(),
    })
}

/// Score distribution of one classifier under both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPair {
    pub mean_same: f64,
    pub var_same: f64,
    pub mean_diff: f64,
    pub var_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlrModel {
    params: Vec<GaussianPair>,
}

impl LlrModel {
    pub fn new(params: Vec<GaussianPair>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::param("params", "at least one classifier required"));
        }
        for p in &params {
            let ok = [p.mean_same, p.var_same, p.mean_diff, p.var_diff]
                .iter()
                .all(|v| v.is_finite())
                && p.var_same >= variance_floor(p.mean_same)
                && p.var_diff >= variance_floor(p.mean_diff);
            if !ok {
                return Err(Error::param("params", format!("invalid Gaussian parameters {p:?}")));
            }
        }
        Ok(LlrModel { params })
    }

    pub fn params(&self) -> &[GaussianPair] {
        &self.params
    }

    pub fn n_classifiers(&self) -> usize {
        self.params.len()
    }
}

/// Smallest variance a fitted Gaussian may have.
pub fn variance_floor(mean: f64) -> f64 {
    1e-8 * (1.0 + mean * mean)
}

/// Sample mean and unbiased variance.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Fits one Gaussian per classifier and hypothesis. `same_scores[i]` and
/// `diff_scores[i]` hold classifier `i`'s genuine and impostor training scores.
pub fn fit_llr(same_scores: &[Vec<f64>], diff_scores: &[Vec<f64>]) -> Result<LlrModel> {
    check_count(same_scores.len(), diff_scores.len())?;
    let mut params = Vec::with_capacity(same_scores.len());
    for (i, (same, diff)) in same_scores.iter().zip(diff_scores).enumerate() {
        if same.len() < 2 || diff.len() < 2 {
            return Err(Error::param(
                "scores",
                format!(
                    "classifier {i} has {} same / {} diff scores; need at least 2 of each",
                    same.len(),
                    diff.len()
                ),
            ));
        }
        let (mean_same, var_same) = mean_var(same);
        let (mean_diff, var_diff) = mean_var(diff);
        params.push(GaussianPair {
            mean_same,
            var_same: var_same.max(variance_floor(mean_same)),
            mean_diff,
            var_diff: var_diff.max(variance_floor(mean_diff)),
        });
    }
    LlrModel::new(params)
}

/// Exact log-likelihood ratio `log Π N(s_i; same) / Π N(s_i; diff)`:
/// `Σ (s - m_d)² / 2σ_d² - (s - m_s)² / 2σ_s² + log(σ_d / σ_s)`.
pub fn fuse_llr(scores: &[f64], model: &LlrModel) -> Result<f64> {
    check_count(model.params.len(), scores.len())?;
    Ok(scores
        .iter()
        .zip(&model.params)
        .map(|(&s, p)| {
            let dd = s - p.mean_diff;
            let ds = s - p.mean_same;
            dd * dd / (2.0 * p.var_diff) - ds * ds / (2.0 * p.var_same) + 0.5 * (p.var_diff / p.var_same).ln()
        })
        .sum())
}

/// Fusion rule selected by a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionModel {
    /// Single classifier passthrough.
    None,
    WeightedSum(WeightedSumModel),
    Llr(LlrModel),
}

impl FusionModel {
    pub fn fuse(&self, scores: &[f64]) -> Result<f64> {
        match self {
            FusionModel::None => {
                check_count(1, scores.len())?;
                Ok(scores[0])
            }
            FusionModel::WeightedSum(m) => fuse_weighted_sum(scores, m),
            FusionModel::Llr(m) => fuse_llr(scores, m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_normal_pdf(s: f64, m: f64, var: f64) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (s - m) * (s - m) / (2.0 * var)
    }

    #[test]
    fn weighted_sum_examples() {
        let m = WeightedSumModel::new(vec![0.1, 0.2]).unwrap();
        assert!((fuse_weighted_sum(&[0.6, 0.8], &m).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(fuse_weighted_sum(&[0.0, 0.0], &m).unwrap(), 0.0);
        assert!(fuse_weighted_sum(&[0.6], &m).is_err());
        let single = WeightedSumModel::new(vec![0.25]).unwrap();
        assert_eq!(fuse_weighted_sum(&[0.3], &single).unwrap(), 1.2);
        assert!(fuse_weighted_sum(&[0.31], &single).unwrap() > 1.2);
    }

    #[test]
    fn weighted_sum_rejects_zero_eer() {
        assert!(WeightedSumModel::new(vec![0.0]).is_err());
        assert!(WeightedSumModel::new(vec![0.6]).is_err());
    }

    #[test]
    fn znorm_sum() {
        let m = WeightedSumModel::new(vec![0.5, 0.5])
            .unwrap()
            .with_znorm(vec![ZNorm { mean: 1.0, std: 2.0 }, ZNorm { mean: 0.0, std: 1.0 }])
            .unwrap();
        assert_eq!(fuse_weighted_sum(&[3.0, 1.0], &m).unwrap(), 4.0);
    }

    #[test]
    fn fit_degenerate_and_hand_variance() {
        let m = fit_llr(&[vec![1.0, 1.0, 1.0, 1.0]], &[vec![0.0, 2.0]]).unwrap();
        let p = m.params()[0];
        assert_eq!(p.mean_same, 1.0);
        assert_eq!(p.var_same, variance_floor(1.0));
        assert_eq!(p.mean_diff, 1.0);
        assert_eq!(p.var_diff, 2.0);
        assert!(fit_llr(&[vec![1.0]], &[vec![0.0, 2.0]]).is_err());
    }

    #[test]
    fn llr_examples() {
        let sym = LlrModel::new(vec![
            GaussianPair { mean_same: 2.0, var_same: 0.5, mean_diff: 0.0, var_diff: 0.5 },
            GaussianPair { mean_same: -1.0, var_same: 3.0, mean_diff: 1.0, var_diff: 3.0 },
        ])
        .unwrap();
        assert_eq!(fuse_llr(&[1.0, 0.0], &sym).unwrap(), 0.0);

        let one = LlrModel::new(vec![GaussianPair { mean_same: 1.0, var_same: 1.0, mean_diff: 0.0, var_diff: 1.0 }])
            .unwrap();
        assert!((fuse_llr(&[1.0], &one).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn llr_matches_log_density_ratio() {
        let p = GaussianPair { mean_same: 0.8, var_same: 0.01, mean_diff: 0.1, var_diff: 0.04 };
        let m = LlrModel::new(vec![p, p]).unwrap();
        let s = [0.5, 0.7];
        let expected: f64 = s
            .iter()
            .map(|&x| log_normal_pdf(x, p.mean_same, p.var_same) - log_normal_pdf(x, p.mean_diff, p.var_diff))
            .sum();
        assert!((fuse_llr(&s, &m).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn llr_midpoint_threshold_equivalence() {
        // One classifier, equal variances: LLR > 0 exactly when s > midpoint.
        let p = GaussianPair { mean_same: 0.75, var_same: 0.0625, mean_diff: 0.25, var_diff: 0.0625 };
        let m = LlrModel::new(vec![p]).unwrap();
        for s in [0.0, 0.25, 0.49, 0.5, 0.51, 0.75, 1.0] {
            let llr = fuse_llr(&[s], &m).unwrap();
            assert_eq!(llr > 0.0, s > 0.5, "s={s}");
            assert_eq!(llr == 0.0, s == 0.5, "s={s}");
        }
    }

    #[test]
    fn passthrough_fusion() {
        assert_eq!(FusionModel::None.fuse(&[0.3]).unwrap(), 0.3);
        assert!(FusionModel::None.fuse(&[0.3, 0.1]).is_err());
    }
}
