//! Error metrics, k-fold cross-validation and error-distribution intervals.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpr::{self, GprError, GprOptions};
use crate::linalg::Matrix;

/// Two-sided normal critical values for the supported confidence levels.
pub const Z_TABLE: [(f64, f64); 3] = [(0.90, 1.645), (0.95, 1.960), (0.99, 2.576)];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no values to evaluate")]
    EmptyInput,
    #[error("normalization base must be positive, got {0}")]
    InvalidBase(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("unsupported confidence level {0}")]
    UnsupportedLevel(f64),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: GprError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse_mw: f64,
    pub mae_mw: f64,
    pub mse_mw2: f64,
    pub rmse_pct: f64,
    pub mae_pct: f64,
    pub n_points: usize,
}

/// RMSE, MAE and MSE of `predicted` against `actual`, with percent forms
/// relative to `base_mw`.
pub fn metrics(actual: &[f64], predicted: &[f64], base_mw: f64) -> Result<MetricSet, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch { actual: actual.len(), predicted: predicted.len() });
    }
    if actual.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if !(base_mw > 0.0) || !base_mw.is_finite() {
        return Err(EvalError::InvalidBase(base_mw));
    }
    let n = actual.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let e = a - p;
        sq += e * e;
        abs += e.abs();
    }
    let mse = sq / n;
    let rmse = mse.sqrt();
    let mae = abs / n;
    Ok(MetricSet {
        rmse_mw: rmse,
        mae_mw: mae,
        mse_mw2: mse,
        rmse_pct: 100.0 * rmse / base_mw,
        mae_pct: 100.0 * mae / base_mw,
        n_points: actual.len(),
    })
}

impl MetricSet {
    /// Field-wise arithmetic mean; `n_points` is the total.
    ///
    /// The averaged `mse_mw2` is the mean of fold MSEs, so it generally
    /// differs from the square of the averaged `rmse_mw`.
    pub fn average(sets: &[MetricSet]) -> Option<MetricSet> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let avg = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        Some(MetricSet {
            rmse_mw: avg(|m| m.rmse_mw),
            mae_mw: avg(|m| m.mae_mw),
            mse_mw2: avg(|m| m.mse_mw2),
            rmse_pct: avg(|m| m.rmse_pct),
            mae_pct: avg(|m| m.mae_pct),
            n_points: sets.iter().map(|m| m.n_points).sum(),
        })
    }
}

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous folds; the
/// first `n % k` folds get one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewPoints { needed: k.max(2), got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub per_fold: Vec<MetricSet>,
    pub mean: MetricSet,
    pub fold_assignments: Vec<Vec<usize>>,
    /// Out-of-fold predictive mean for every input row.
    pub oof_mean: Vec<f64>,
}

/// k-fold cross-validation of a GP on `(x, y)`.
pub fn cross_validate(
    x: &Matrix,
    y: &[f64],
    opts: &GprOptions,
    k: usize,
    seed: u64,
    base_mw: f64,
) -> Result<CvResult, EvalError> {
    if x.rows() != y.len() {
        return Err(EvalError::LengthMismatch { actual: y.len(), predicted: x.rows() });
    }
    let folds = kfold_split(y.len(), k, seed)?;
    let mut in_fold = vec![0usize; y.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }
    let mut per_fold = Vec::with_capacity(k);
    let mut oof_mean = vec![0.0; y.len()];
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..y.len()).filter(|&i| in_fold[i] != f).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model =
            gpr::fit(&x.select_rows(&train), &y_train, opts).map_err(|source| EvalError::Fold { fold: f, source })?;
        let pred = model.predict(&x.select_rows(test), false).map_err(|source| EvalError::Fold { fold: f, source })?;
        let actual: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        per_fold.push(metrics(&actual, &pred.mean, base_mw)?);
        for (&i, m) in test.iter().zip(&pred.mean) {
            oof_mean[i] = *m;
        }
    }
    let mean = MetricSet::average(&per_fold).ok_or(EvalError::EmptyInput)?;
    Ok(CvResult { per_fold, mean, fold_assignments: folds, oof_mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub eps_bar: f64,
    pub sigma_eps: f64,
    pub n: usize,
}

/// Sample mean and standard deviation (divisor `n − 1`) of forecast errors.
pub fn fit_normal(errors: &[f64]) -> Result<ErrorDistribution, EvalError> {
    if errors.len() < 2 {
        return Err(EvalError::TooFewPoints { needed: 2, got: errors.len() });
    }
    let n = errors.len() as f64;
    let eps_bar = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - eps_bar).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ErrorDistribution { eps_bar, sigma_eps: var.sqrt(), n: errors.len() })
}

pub fn z_star(level: f64) -> Result<f64, EvalError> {
    Z_TABLE.iter().find(|(l, _)| (l - level).abs() < 1e-9).map(|(_, z)| *z).ok_or(EvalError::UnsupportedLevel(level))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub z_star: f64,
    /// `ε̄ − z*·σ_ε/√n`.
    pub lo_mw: f64,
    /// `ε̄ + z*·σ_ε/√n`.
    pub hi_mw: f64,
    /// `ε̄ − z*·σ_ε`, the band covering individual errors.
    pub spread_lo_mw: f64,
    /// `ε̄ + z*·σ_ε`.
    pub spread_hi_mw: f64,
}

/// Interval for the mean error, `ε̄ ± z*·σ_ε/√n`, plus the spread band.
pub fn confidence_interval(dist: &ErrorDistribution, level: f64) -> Result<ConfidenceInterval, EvalError> {
    if dist.n < 2 {
        return Err(EvalError::TooFewPoints { needed: 2, got: dist.n });
    }
    let z = z_star(level)?;
    let half = z * dist.sigma_eps / (dist.n as f64).sqrt();
    let spread = z * dist.sigma_eps;
    Ok(ConfidenceInterval {
        level,
        z_star: z,
        lo_mw: dist.eps_bar - half,
        hi_mw: dist.eps_bar + half,
        spread_lo_mw: dist.eps_bar - spread,
        spread_hi_mw: dist.eps_bar + spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_metrics() {
        let m = metrics(&[2.0, 4.0], &[3.0, 3.0], 30.0).unwrap();
        assert_eq!((m.mae_mw, m.mse_mw2, m.rmse_mw), (1.0, 1.0, 1.0));
        let zero = metrics(&[1.0, 5.0], &[1.0, 5.0], 30.0).unwrap();
        assert_eq!(zero.rmse_pct, 0.0);
        let pct = metrics(&[1.23], &[0.0], 30.0).unwrap();
        assert!((pct.rmse_pct - 4.1).abs() < 1e-12);
    }

    #[test]
    fn metric_errors() {
        assert_eq!(metrics(&[], &[], 1.0).unwrap_err(), EvalError::EmptyInput);
        assert!(matches!(metrics(&[1.0], &[1.0, 2.0], 1.0), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(metrics(&[1.0], &[1.0], 0.0), Err(EvalError::InvalidBase(_))));
    }

    #[test]
    fn folds_follow_remainder_rule() {
        let sizes: Vec<usize> = kfold_split(11, 5, 3).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
        assert!(kfold_split(10, 5, 1).unwrap().iter().all(|f| f.len() == 2));
        assert_eq!(kfold_split(10, 5, 9).unwrap(), kfold_split(10, 5, 9).unwrap());
        assert!(kfold_split(3, 5, 0).is_err());
        assert!(kfold_split(3, 1, 0).is_err());
    }

    #[test]
    fn normal_fit() {
        let d = fit_normal(&[-1.0, 1.0]).unwrap();
        assert_eq!(d.eps_bar, 0.0);
        assert!((d.sigma_eps - 2f64.sqrt()).abs() < 1e-15);
        let flat = fit_normal(&[0.5; 4]).unwrap();
        assert_eq!((flat.eps_bar, flat.sigma_eps), (0.5, 0.0));
        assert!(fit_normal(&[1.0]).is_err());
    }

    #[test]
    fn interval_levels() {
        let d = ErrorDistribution { eps_bar: 0.03, sigma_eps: 0.5, n: 720 };
        let ci = confidence_interval(&d, 0.95).unwrap();
        assert_eq!(ci.z_star, 1.96);
        assert!((ci.lo_mw + 0.006_522).abs() < 1e-5 && (ci.hi_mw - 0.066_522).abs() < 1e-5);
        assert!((ci.spread_lo_mw + 0.95).abs() < 1e-12);
        assert!(matches!(confidence_interval(&d, 0.8), Err(EvalError::UnsupportedLevel(_))));
        let degenerate = ErrorDistribution { sigma_eps: 0.0, ..d };
        let ci = confidence_interval(&degenerate, 0.99).unwrap();
        assert_eq!((ci.lo_mw, ci.hi_mw), (0.03, 0.03));
    }

    #[test]
    fn leave_one_out_runs() {
        let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.4).sin()).collect();
        let opts = GprOptions { n_starts: 2, ..GprOptions::default() };
        let cv = cross_validate(&x, &y, &opts, 10, 0, 1.0).unwrap();
        assert_eq!(cv.per_fold.len(), 10);
        assert_eq!(cv.mean.n_points, 10);
    }

    #[test]
    fn constant_output_cv_is_exact() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let cv = cross_validate(&x, &[3.0; 20], &GprOptions::default(), 5, 0, 1.0).unwrap();
        assert!(cv.mean.rmse_mw < 1e-12);
    }
}
