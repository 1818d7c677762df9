use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// z-score parameters for inputs and output, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn is_flat(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

impl Standardizer {
    /// Fits means and sample standard deviations. Returns the indices of
    /// constant input columns alongside; their stored std is 1. A constant
    /// output is centered only (std 1).
    pub fn fit(x: &Matrix, y: &[f64]) -> (Self, Vec<usize>, bool) {
        let mut x_mean = Vec::with_capacity(x.cols());
        let mut x_std = Vec::with_capacity(x.cols());
        let mut constant = Vec::new();
        for j in 0..x.cols() {
            let (m, s) = mean_std(x.iter_rows().map(move |r| r[j]));
            x_mean.push(m);
            if is_flat(m, s) {
                constant.push(j);
                x_std.push(1.0);
            } else {
                x_std.push(s);
            }
        }
        let (y_mean, s) = mean_std(y.iter().copied());
        let y_flat = is_flat(y_mean, s);
        let y_std = if y_flat { 1.0 } else { s };
        (Standardizer { x_mean, x_std, y_mean, y_std }, constant, y_flat)
    }

    /// Keeps only the listed input columns.
    pub fn restrict(&self, cols: &[usize]) -> Standardizer {
        Standardizer {
            x_mean: cols.iter().map(|&j| self.x_mean[j]).collect(),
            x_std: cols.iter().map(|&j| self.x_std[j]).collect(),
            y_mean: self.y_mean,
            y_std: self.y_std,
        }
    }

    pub fn transform_x(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.x_mean).zip(&self.x_std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn transform_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_std).collect()
    }

    pub fn inverse_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| self.y_mean + v * self.y_std).collect()
    }

    pub fn inverse_variance(&self, var: &[f64]) -> Vec<f64> {
        let s2 = self.y_std * self.y_std;
        var.iter().map(|v| v * s2).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_columns_flagged() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let (s, constant, y_flat) = Standardizer::fit(&x, &[1.0, 1.0, 1.0]);
        assert_eq!(constant, vec![1]);
        assert!(y_flat);
        assert_eq!(s.x_std[1], 1.0);
        assert!((s.x_std[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.transform_y(&[1.0]), vec![0.0]);
    }

    #[test]
    fn output_round_trip() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = [3.5, -1.25];
        let (s, _, _) = Standardizer::fit(&x, &y);
        let back = s.inverse_y(&s.transform_y(&y));
        for (a, b) in back.iter().zip(y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
