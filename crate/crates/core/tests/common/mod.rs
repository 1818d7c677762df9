#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pvgp::gpr::{FitReport, KernelHyperparams, Standardizer, TrainedGpr};
use pvgp::linalg::Matrix;

/// Matérn 5/2 written out from the closed form, independent of the crate.
pub fn matern52_reference(r: f64, signal_var: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    signal_var * (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
}

pub fn scaled_distance(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(d, (u, v))| {
            let l = if length_scales.len() == 1 { length_scales[0] } else { length_scales[d] };
            ((u - v) / l).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn dense_kernel(a: &[Vec<f64>], b: &[Vec<f64>], hp: &KernelHyperparams) -> DMatrix<f64> {
    let ls = hp.length_scales();
    let sf2 = hp.signal_variance();
    DMatrix::from_fn(a.len(), b.len(), |i, j| matern52_reference(scaled_distance(&a[i], &b[j], &ls), sf2))
}

/// Posterior quantities from explicit inverses and determinants.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    pub beta: f64,
    pub log_likelihood: f64,
    pub mean: Vec<f64>,
    pub latent_variance: Vec<f64>,
    pub noise: f64,
}

pub fn dense_oracle(x: &[Vec<f64>], y: &[f64], hp: &KernelHyperparams, xq: &[Vec<f64>]) -> DenseOracle {
    let t = y.len();
    let noise = hp.sigma2.max(1e-8);
    let a = dense_kernel(x, x, hp) + DMatrix::identity(t, t) * noise;
    let a_inv = a.clone().try_inverse().expect("invertible covariance");
    let ones = DVector::from_element(t, 1.0);
    let yv = DVector::from_column_slice(y);
    let beta = (ones.transpose() * &a_inv * &yv)[0] / (ones.transpose() * &a_inv * &ones)[0];
    let r = &yv - &ones * beta;
    let quad = (r.transpose() * &a_inv * &r)[0];
    let log_likelihood = -0.5 * quad - 0.5 * t as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * a.determinant().ln();
    let kq = dense_kernel(xq, x, hp);
    let weights = &a_inv * &r;
    let mean = (0..xq.len()).map(|i| beta + (kq.row(i) * &weights)[0]).collect();
    let latent_variance = (0..xq.len())
        .map(|i| {
            let k = kq.row(i).transpose();
            hp.signal_variance() - (k.transpose() * &a_inv * &k)[0]
        })
        .collect();
    DenseOracle { beta, log_likelihood, mean, latent_variance, noise }
}

/// A model that sees its inputs unscaled, so its predictions are directly
/// comparable with [`dense_oracle`].
pub fn unscaled_model(x: &[Vec<f64>], y: &[f64], hp: &KernelHyperparams) -> TrainedGpr {
    let q = x[0].len();
    let standardizer = Standardizer { x_mean: vec![0.0; q], x_std: vec![1.0; q], y_mean: 0.0, y_std: 1.0 };
    let report = FitReport {
        starts: vec![],
        best_start: None,
        search_points: 0,
        train_points: y.len(),
        log_likelihood: f64::NAN,
        jitter: 0.0,
        dropped_columns: vec![],
        constant_output: false,
    };
    TrainedGpr::from_parts(
        standardizer,
        q,
        (0..q).collect(),
        Matrix::from_rows(x).unwrap(),
        y.to_vec(),
        hp.clone(),
        report,
    )
    .expect("model builds")
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-12)
}
