use serde::{Deserialize, Serialize};

use super::GprError;
use crate::linalg::Matrix;

/// Lower bound applied to the noise variance, in standardized units.
pub const SIGMA2_FLOOR: f64 = 1e-8;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Matérn 5/2 hyperparameters on a log10 scale.
///
/// `theta_l` has one entry for an isotropic kernel or one per input
/// dimension for automatic relevance determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub theta_l: Vec<f64>,
    pub theta_f: f64,
    pub sigma2: f64,
}

impl KernelHyperparams {
    pub fn isotropic(length_scale: f64, signal_std: f64, sigma2: f64) -> Self {
        KernelHyperparams { theta_l: vec![length_scale.log10()], theta_f: signal_std.log10(), sigma2 }
    }

    pub fn is_ard(&self) -> bool {
        self.theta_l.len() > 1
    }

    /// `σ_l = 10^θ_l`, per dimension or a single value.
    pub fn length_scales(&self) -> Vec<f64> {
        self.theta_l.iter().map(|t| 10f64.powf(*t)).collect()
    }

    /// `σ_f²`.
    pub fn signal_variance(&self) -> f64 {
        10f64.powf(2.0 * self.theta_f)
    }

    /// Noise variance with the floor applied.
    pub fn noise_variance(&self) -> f64 {
        self.sigma2.max(SIGMA2_FLOOR)
    }

    pub fn check(&self, dim: usize) -> Result<(), GprError> {
        if self.theta_l.is_empty() || (self.theta_l.len() != 1 && self.theta_l.len() != dim) {
            return Err(GprError::DimensionMismatch { expected: dim, got: self.theta_l.len() });
        }
        let finite = self.theta_l.iter().all(|t| t.is_finite()) && self.theta_f.is_finite();
        if !finite || !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(GprError::InvalidHyperparams(format!("{self:?}")));
        }
        Ok(())
    }

    /// Input rows divided by their length scales, so that plain Euclidean
    /// distance between scaled rows is the kernel's `r`.
    pub(crate) fn scale_inputs(&self, x: &Matrix) -> Matrix {
        let ls = self.length_scales();
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            if ls.len() == 1 {
                row.iter_mut().for_each(|v| *v /= ls[0]);
            } else {
                row.iter_mut().zip(&ls).for_each(|(v, l)| *v /= l);
            }
        }
        out
    }
}

/// Matérn 5/2 correlation at scaled distance `r`: `(1 + √5 r + 5r²/3) e^{-√5 r}`.
#[inline]
pub fn matern52_unit(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
fn scaled_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `σ_f² (1 + √5 r + 5r²/3) e^{-√5 r}` between two points.
pub fn matern52(u: &[f64], v: &[f64], hp: &KernelHyperparams) -> Result<f64, GprError> {
    if u.len() != v.len() {
        return Err(GprError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    hp.check(u.len())?;
    let ls = hp.length_scales();
    let r = if ls.len() == 1 {
        scaled_distance(u, v) / ls[0]
    } else {
        u.iter().zip(v).zip(&ls).map(|((a, b), l)| ((a - b) / l).powi(2)).sum::<f64>().sqrt()
    };
    Ok(hp.signal_variance() * matern52_unit(r))
}

/// `K(X, X)`: the upper triangle is evaluated and mirrored, so the result is
/// exactly symmetric.
pub fn build_kernel_matrix(x: &Matrix, hp: &KernelHyperparams) -> Matrix {
    let n = x.rows();
    let xs = hp.scale_inputs(x);
    let sf2 = hp.signal_variance();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, sf2);
        for j in i + 1..n {
            let v = sf2 * matern52_unit(scaled_distance(xs.row(i), xs.row(j)));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// `K(Xq, X)`, one row per query point.
pub fn cross_kernel(xq: &Matrix, x: &Matrix, hp: &KernelHyperparams) -> Matrix {
    let xs = hp.scale_inputs(x);
    let qs = hp.scale_inputs(xq);
    let sf2 = hp.signal_variance();
    let mut k = Matrix::zeros(xq.rows(), x.rows());
    for i in 0..xq.rows() {
        let q = qs.row(i);
        for (j, xr) in xs.iter_rows().enumerate() {
            k.set(i, j, sf2 * matern52_unit(scaled_distance(q, xr)));
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_values() {
        let hp = KernelHyperparams::isotropic(2.0, 1.0, 0.0);
        let u = [0.0, 0.0];
        assert_eq!(matern52(&u, &u, &hp).unwrap(), 1.0);
        // ‖u−v‖ = σ_l → r = 1
        let one = matern52(&u, &[2.0, 0.0], &hp).unwrap();
        assert!((one - 0.523_994_108_8).abs() < 1e-9);
        let two = matern52(&u, &[0.0, 4.0], &hp).unwrap();
        assert!((two - 0.138_660_219_1).abs() < 1e-9);
        let far = matern52(&u, &[200.0, 0.0], &hp).unwrap();
        assert!(far < 1e-80);
    }

    #[test]
    fn amplitude_scales_quadratically() {
        let hp = KernelHyperparams::isotropic(1.0, 3.0, 0.0);
        assert!((matern52(&[1.0], &[1.0], &hp).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn ard_uses_per_dimension_scales() {
        let hp = KernelHyperparams { theta_l: vec![0.0, 1.0], theta_f: 0.0, sigma2: 0.0 };
        // (1/1)² + (10/10)² → r = √2
        let k = matern52(&[0.0, 0.0], &[1.0, 10.0], &hp).unwrap();
        assert!((k - matern52_unit(2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let hp = KernelHyperparams::isotropic(1.0, 1.0, 0.0);
        assert!(matches!(matern52(&[0.0], &[0.0, 1.0], &hp), Err(GprError::DimensionMismatch { .. })));
        let ard = KernelHyperparams { theta_l: vec![0.0, 0.0, 0.0], theta_f: 0.0, sigma2: 0.0 };
        assert!(matern52(&[0.0, 1.0], &[0.0, 1.0], &ard).is_err());
    }

    #[test]
    fn kernel_matrix_shapes() {
        let hp = KernelHyperparams::isotropic(1.5, 2.0, 0.0);
        let single = build_kernel_matrix(&Matrix::from_rows(&[vec![0.3, 0.1]]).unwrap(), &hp);
        assert_eq!(single.as_slice(), &[4.0]);

        let x = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![3.0]]).unwrap();
        let k = build_kernel_matrix(&x, &hp);
        assert_eq!(k.get(0, 1), k.get(0, 0));
        // spacing 1.5 = σ_l between rows 1 and 3 twice → r = 2
        assert!((k.get(0, 2) - 4.0 * 0.138_660_219_1).abs() < 1e-8);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
        let cross = cross_kernel(&x, &x, &hp);
        assert_eq!(cross.as_slice(), k.as_slice());
    }
}
