//! Gaussian-process regression with a Matérn 5/2 kernel and a constant
//! explicit basis.
//!
//! The model is `y = f(x) + β + ε` with `f ~ GP(0, k)` and `ε ~ N(0, σ²)`.
//! For fixed kernel parameters the basis coefficient has the closed form
//!
//! ```text
//! β̂ = (1ᵀ A⁻¹ y) / (1ᵀ A⁻¹ 1),    A = K(X, X) + σ² I
//! ```
//!
//! and substituting it back gives the concentrated log-likelihood
//!
//! ```text
//! log p(y | X) = −½ rᵀ A⁻¹ r − (T/2) log 2π − ½ log|A|,    r = y − β̂
//! ```
//!
//! which [`fit`] maximizes over `(θ_l, θ_f, log10 σ²)` with multi-start
//! Nelder-Mead. Everything is evaluated through one Cholesky factor of `A`.
//! Inputs and output are z-scored per model before fitting.

mod kernel;
mod standardize;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, Cholesky, LinalgError, Matrix};
use crate::optim::{nelder_mead, NelderMeadOptions};

pub use kernel::{build_kernel_matrix, cross_kernel, matern52, matern52_unit, KernelHyperparams, SIGMA2_FLOOR};
pub use standardize::Standardizer;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Optimizer iterates outside `|log10 param| ≤ PARAM_BOX` are rejected.
const PARAM_BOX: f64 = 8.0;
/// Relative tolerance used when checking reloaded artifacts.
const ARTIFACT_TOL: f64 = 1e-8;
const REFINE_STEPS: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum GprError {
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input column {0} is constant")]
    ConstantColumn(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("kernel matrix is singular even with maximal jitter")]
    SingularKernel,
    #[error("no optimizer start reached a finite likelihood")]
    OptimizerFailure,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("model artifact failed integrity check: {0}")]
    ArtifactCorrupt(String),
}

impl From<LinalgError> for GprError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::DimensionMismatch { expected, got } => GprError::DimensionMismatch { expected, got },
            _ => GprError::SingularKernel,
        }
    }
}

/// Factorization of `A = K + σ²I` with the quantities derived from it.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub chol: Cholesky,
    pub beta: f64,
    /// `A⁻¹ (y − β)`.
    pub alpha: Vec<f64>,
    pub log_likelihood: f64,
}

fn covariance(x: &Matrix, hp: &KernelHyperparams) -> Matrix {
    let mut a = build_kernel_matrix(x, hp);
    a.add_diagonal(hp.noise_variance());
    a
}

fn check_inputs(x: &Matrix, y: &[f64], hp: &KernelHyperparams) -> Result<(), GprError> {
    if x.rows() != y.len() {
        return Err(GprError::DimensionMismatch { expected: x.rows(), got: y.len() });
    }
    if x.rows() == 0 {
        return Err(GprError::TooFewPoints { needed: 1, got: 0 });
    }
    hp.check(x.cols())
}

/// Factors `A` and evaluates β̂, `A⁻¹(y − β̂)` and the concentrated
/// log-likelihood in one pass.
pub fn posterior(x: &Matrix, y: &[f64], hp: &KernelHyperparams) -> Result<Posterior, GprError> {
    check_inputs(x, y, hp)?;
    posterior_from(&covariance(x, hp), y, 0)
}

/// As [`posterior`], followed by `refine_steps` rounds of iterative
/// refinement of `α` against `a` (plus any jitter).
fn posterior_from(a: &Matrix, y: &[f64], refine_steps: usize) -> Result<Posterior, GprError> {
    let chol = Cholesky::factor_with_jitter(a)?;
    let n = y.len();
    let mut w1 = vec![1.0; n];
    chol.solve_lower_in_place(&mut w1);
    let mut wy = y.to_vec();
    chol.solve_lower_in_place(&mut wy);
    let beta = dot(&w1, &wy) / dot(&w1, &w1);
    let mut wr: Vec<f64> = wy.iter().zip(&w1).map(|(a, b)| a - beta * b).collect();
    let quad = dot(&wr, &wr);
    let log_likelihood = -0.5 * quad - 0.5 * n as f64 * LN_2PI - chol.half_log_det();
    chol.solve_upper_in_place(&mut wr);
    let mut alpha = wr;
    for _ in 0..refine_steps {
        let ax = a.mul_vec(&alpha);
        let resid: Vec<f64> =
            ax.iter().zip(y).zip(&alpha).map(|((u, v), al)| (v - beta) - u - chol.jitter() * al).collect();
        let delta = chol.solve(&resid);
        alpha.iter_mut().zip(&delta).for_each(|(al, d)| *al += d);
    }
    Ok(Posterior { chol, beta, alpha, log_likelihood })
}

/// Generalized-least-squares estimate of the constant basis coefficient.
pub fn concentrated_beta(x: &Matrix, y: &[f64], hp: &KernelHyperparams) -> Result<f64, GprError> {
    posterior(x, y, hp).map(|p| p.beta)
}

/// Log marginal likelihood with β concentrated out.
pub fn log_marginal_likelihood(x: &Matrix, y: &[f64], hp: &KernelHyperparams) -> Result<f64, GprError> {
    posterior(x, y, hp).map(|p| p.log_likelihood)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprOptions {
    pub n_starts: usize,
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// One length scale per input dimension instead of a shared one.
    pub ard: bool,
    pub seed: u64,
    /// Simplex diameter, in log10 parameter units, that ends a start.
    pub diameter_tol: f64,
    /// Hyperparameters are searched on a seeded random subset of at most
    /// this many points; `None` searches on all training points.
    pub max_opt_points: Option<usize>,
    /// The final model conditions on a seeded random subset of at most this
    /// many points; `None` keeps every point.
    pub max_train_points: Option<usize>,
    /// Drop constant input columns instead of failing with `ConstantColumn`.
    pub drop_constant_columns: bool,
}

impl Default for GprOptions {
    fn default() -> Self {
        GprOptions {
            n_starts: 8,
            max_evals: 2000,
            ard: false,
            seed: 0,
            diameter_tol: 1e-6,
            max_opt_points: Some(300),
            max_train_points: Some(3000),
            drop_constant_columns: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    /// Initial `[θ_l.., θ_f, log10 σ²]`.
    pub initial: Vec<f64>,
    /// Final `[θ_l.., θ_f, log10 σ²]`.
    pub optimum: Vec<f64>,
    /// Concentrated log-likelihood at `optimum` on the search subset.
    pub log_likelihood: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub starts: Vec<StartReport>,
    pub best_start: Option<usize>,
    pub search_points: usize,
    pub train_points: usize,
    /// Concentrated log-likelihood of the final model on its training data
    /// (standardized units).
    pub log_likelihood: f64,
    pub jitter: f64,
    /// Input columns dropped because they were constant.
    pub dropped_columns: Vec<usize>,
    pub constant_output: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedGpr {
    pub standardizer: Standardizer,
    /// Number of input columns queries must provide.
    pub n_inputs: usize,
    /// Input columns the kernel sees, as indices into the query columns.
    pub active_columns: Vec<usize>,
    /// Standardized training inputs (active columns only).
    pub x: Matrix,
    /// Standardized training outputs.
    pub y: Vec<f64>,
    pub hp: KernelHyperparams,
    pub beta: f64,
    pub posterior: Posterior,
    pub fit_report: FitReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Predictive mean in output units.
    pub mean: Vec<f64>,
    /// Predictive variance in squared output units.
    pub variance: Vec<f64>,
    pub includes_noise: bool,
}

fn seeded_subset(n: usize, cap: Option<usize>, seed: u64, stream: u64) -> Option<Vec<usize>> {
    let cap = cap?;
    if n <= cap {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx = index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    Some(idx)
}

fn median_pairwise_distance(x: &Matrix) -> f64 {
    let n = x.rows();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            d.push(s.sqrt());
        }
    }
    let positive: Vec<f64> = d.into_iter().filter(|v| *v > 0.0).collect();
    if positive.is_empty() {
        return 1.0;
    }
    let mut positive = positive;
    let mid = positive.len() / 2;
    let (_, m, _) = positive.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

fn params_to_hp(p: &[f64], n_len: usize) -> KernelHyperparams {
    KernelHyperparams {
        theta_l: p[..n_len].to_vec(),
        theta_f: p[n_len],
        sigma2: 10f64.powf(p[n_len + 1]).max(SIGMA2_FLOOR),
    }
}

/// Fits a model on raw inputs (`T × q`) and outputs.
pub fn fit(x_raw: &Matrix, y_raw: &[f64], opts: &GprOptions) -> Result<TrainedGpr, GprError> {
    const MIN_POINTS: usize = 5;
    if x_raw.rows() != y_raw.len() {
        return Err(GprError::DimensionMismatch { expected: x_raw.rows(), got: y_raw.len() });
    }
    if x_raw.rows() < MIN_POINTS {
        return Err(GprError::TooFewPoints { needed: MIN_POINTS, got: x_raw.rows() });
    }
    if x_raw.cols() == 0 {
        return Err(GprError::DimensionMismatch { expected: 1, got: 0 });
    }
    if !x_raw.as_slice().iter().chain(y_raw).all(|v| v.is_finite()) {
        return Err(GprError::NonFinite);
    }

    let (x_raw, y_raw) = match seeded_subset(x_raw.rows(), opts.max_train_points, opts.seed, 1) {
        Some(idx) => (x_raw.select_rows(&idx), idx.iter().map(|&i| y_raw[i]).collect()),
        None => (x_raw.clone(), y_raw.to_vec()),
    };

    let (standardizer, constant, constant_output) = Standardizer::fit(&x_raw, &y_raw);
    if let Some(&c) = constant.first() {
        if !opts.drop_constant_columns || constant.len() == x_raw.cols() {
            return Err(GprError::ConstantColumn(c));
        }
    }
    let active: Vec<usize> = (0..x_raw.cols()).filter(|j| !constant.contains(j)).collect();
    let standardizer = standardizer.restrict(&active);
    let x = standardizer.transform_x(&x_raw.select_cols(&active));
    let y = standardizer.transform_y(&y_raw);

    let search_idx = seeded_subset(x.rows(), opts.max_opt_points, opts.seed, 2);
    let (xs, ys) = match &search_idx {
        Some(idx) => (x.select_rows(idx), idx.iter().map(|&i| y[i]).collect()),
        None => (x.clone(), y.clone()),
    };

    let median = median_pairwise_distance(&xs);
    let n_len = if opts.ard { active.len() } else { 1 };
    let (lo, hi) = ((0.1 * median).log10(), (10.0 * median).log10());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initials: Vec<Vec<f64>> = (0..opts.n_starts.max(1))
        .map(|_| {
            let mut p: Vec<f64> = (0..n_len).map(|_| rng.random_range(lo..=hi)).collect();
            p.push(0.0);
            p.push(-2.0);
            p
        })
        .collect();

    let (hp, starts, best_start) = if constant_output {
        // nothing to fit: keep the first start
        (params_to_hp(&initials[0], n_len), Vec::new(), None)
    } else {
        let nm = NelderMeadOptions {
            max_evals: opts.max_evals,
            diameter_tol: opts.diameter_tol,
            ..NelderMeadOptions::default()
        };
        let objective = |p: &[f64]| -> f64 {
            if p.iter().any(|v| v.abs() > PARAM_BOX) {
                return f64::INFINITY;
            }
            match log_marginal_likelihood(&xs, &ys, &params_to_hp(p, n_len)) {
                Ok(l) => -l,
                Err(_) => f64::INFINITY,
            }
        };
        let starts: Vec<StartReport> = initials
            .par_iter()
            .map(|init| {
                let r = nelder_mead(objective, init, &nm);
                StartReport {
                    initial: init.clone(),
                    optimum: r.x,
                    log_likelihood: -r.f,
                    evals: r.evals,
                    converged: r.converged,
                }
            })
            .collect();
        let best = starts
            .iter()
            .enumerate()
            .filter(|(_, s)| s.log_likelihood.is_finite())
            .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
                Some((_, b)) if b >= s.log_likelihood => acc,
                _ => Some((i, s.log_likelihood)),
            })
            .ok_or(GprError::OptimizerFailure)?
            .0;
        (params_to_hp(&starts[best].optimum, n_len), starts, Some(best))
    };

    check_inputs(&x, &y, &hp)?;
    let post = posterior_from(&covariance(&x, &hp), &y, REFINE_STEPS)?;
    let fit_report = FitReport {
        starts,
        best_start,
        search_points: xs.rows(),
        train_points: x.rows(),
        log_likelihood: post.log_likelihood,
        jitter: post.chol.jitter(),
        dropped_columns: constant,
        constant_output,
    };
    Ok(TrainedGpr {
        standardizer,
        n_inputs: x_raw.cols(),
        active_columns: active,
        x,
        y,
        beta: post.beta,
        hp,
        posterior: post,
        fit_report,
    })
}

impl TrainedGpr {
    /// Builds a model from standardized data and fixed hyperparameters.
    pub fn from_parts(
        standardizer: Standardizer,
        n_inputs: usize,
        active_columns: Vec<usize>,
        x: Matrix,
        y: Vec<f64>,
        hp: KernelHyperparams,
        fit_report: FitReport,
    ) -> Result<Self, GprError> {
        if active_columns.len() != x.cols() || active_columns.iter().any(|&c| c >= n_inputs) {
            return Err(GprError::DimensionMismatch { expected: x.cols(), got: active_columns.len() });
        }
        check_inputs(&x, &y, &hp)?;
        let post = posterior_from(&covariance(&x, &hp), &y, REFINE_STEPS)?;
        Ok(TrainedGpr {
            standardizer,
            n_inputs,
            active_columns,
            x,
            y,
            beta: post.beta,
            hp,
            posterior: post,
            fit_report,
        })
    }

    /// Predicts at raw query rows with all `n_inputs` columns.
    pub fn predict(&self, xq_raw: &Matrix, include_noise: bool) -> Result<Prediction, GprError> {
        if xq_raw.rows() > 0 && xq_raw.cols() != self.n_inputs {
            return Err(GprError::DimensionMismatch { expected: self.n_inputs, got: xq_raw.cols() });
        }
        if xq_raw.rows() == 0 {
            return Ok(Prediction { mean: vec![], variance: vec![], includes_noise: include_noise });
        }
        let xq = self.standardizer.transform_x(&xq_raw.select_cols(&self.active_columns));
        let kstar = cross_kernel(&xq, &self.x, &self.hp);
        let prior = self.hp.signal_variance();
        let noise = if include_noise { self.hp.noise_variance() } else { 0.0 };
        let mut mean = Vec::with_capacity(xq.rows());
        let mut variance = Vec::with_capacity(xq.rows());
        for row in kstar.iter_rows() {
            mean.push(self.beta + dot(row, &self.posterior.alpha));
            let mut v = row.to_vec();
            self.posterior.chol.solve_lower_in_place(&mut v);
            variance.push((prior - dot(&v, &v)).max(0.0) + noise);
        }
        Ok(Prediction {
            mean: self.standardizer.inverse_y(&mean),
            variance: self.standardizer.inverse_variance(&variance),
            includes_noise: include_noise,
        })
    }

    /// Serializable form; the Cholesky factor is recomputed on load.
    pub fn to_artifact(&self) -> GprArtifact {
        GprArtifact {
            standardizer: self.standardizer.clone(),
            n_inputs: self.n_inputs,
            active_columns: self.active_columns.clone(),
            hp: self.hp.clone(),
            beta: self.beta,
            log_likelihood: self.posterior.log_likelihood,
            x: self.x.iter_rows().map(<[f64]>::to_vec).collect(),
            y: self.y.clone(),
            fit_report: self.fit_report.clone(),
        }
    }

    /// Rebuilds a model from an artifact, refactoring `A` and checking the
    /// result against the stored β and likelihood and the solve residual.
    pub fn from_artifact(a: GprArtifact) -> Result<Self, GprError> {
        let corrupt = |m: String| GprError::ArtifactCorrupt(m);
        let x = Matrix::from_rows(&a.x).map_err(|e| corrupt(e.to_string()))?;
        if x.rows() != a.y.len() || x.cols() != a.active_columns.len() {
            return Err(corrupt("training data shape does not match".into()));
        }
        if a.standardizer.x_mean.len() != x.cols() || a.standardizer.x_std.len() != x.cols() {
            return Err(corrupt("standardizer shape does not match".into()));
        }
        let m = TrainedGpr::from_parts(a.standardizer, a.n_inputs, a.active_columns, x, a.y, a.hp, a.fit_report)
            .map_err(|e| match e {
                GprError::ArtifactCorrupt(_) => e,
                other => corrupt(other.to_string()),
            })?;
        let close = |u: f64, v: f64| (u - v).abs() <= ARTIFACT_TOL * u.abs().max(v.abs()).max(1.0);
        if !close(m.beta, a.beta) {
            return Err(corrupt(format!("beta {} != stored {}", m.beta, a.beta)));
        }
        if !close(m.posterior.log_likelihood, a.log_likelihood) {
            return Err(corrupt(format!(
                "log-likelihood {} != stored {}",
                m.posterior.log_likelihood, a.log_likelihood
            )));
        }
        let health = m.numerical_health();
        if health.factor_error > ARTIFACT_TOL {
            return Err(corrupt(format!("Cholesky probe error {:e} too large", health.factor_error)));
        }
        if health.residual > health.residual_bound {
            return Err(corrupt(format!(
                "solve residual {:e} exceeds bound {:e}",
                health.residual, health.residual_bound
            )));
        }
        Ok(m)
    }

    /// Checks the stored factorization against a freshly built `A`
    /// (including jitter).
    pub fn numerical_health(&self) -> NumericalHealth {
        let n = self.y.len();
        let mut a = covariance(&self.x, &self.hp);
        a.add_diagonal(self.posterior.chol.jitter());
        let chol = &self.posterior.chol;

        let probe: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let av = a.mul_vec(&probe);
        let llv = chol.mul_lower(&chol.mul_upper(&probe));
        let factor_error = norm(&sub(&llv, &av)) / norm(&av).max(f64::MIN_POSITIVE);

        let rhs: Vec<f64> = self.y.iter().map(|v| v - self.beta).collect();
        let residual = norm(&sub(&a.mul_vec(&self.posterior.alpha), &rhs));
        let a_frobenius = norm(a.as_slice());
        let residual_bound =
            ARTIFACT_TOL * norm(&self.y) + n as f64 * f64::EPSILON * a_frobenius * norm(&self.posterior.alpha);
        NumericalHealth { factor_error, residual, residual_bound }
    }
}

/// Diagnostics from [`TrainedGpr::numerical_health`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericalHealth {
    /// `‖L Lᵀ v − A v‖ / ‖A v‖` for a fixed probe `v`.
    pub factor_error: f64,
    /// `‖A α − (y − β)‖`.
    pub residual: f64,
    /// `1e-8·‖y‖ + n·ε·‖A‖_F·‖α‖`: the fixed tolerance plus the backward
    /// error a stable Cholesky solve can leave on an ill-conditioned `A`.
    pub residual_bound: f64,
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

/// JSON form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprArtifact {
    pub standardizer: Standardizer,
    pub n_inputs: usize,
    pub active_columns: Vec<usize>,
    pub hp: KernelHyperparams,
    pub beta: f64,
    pub log_likelihood: f64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub fit_report: FitReport,
}
