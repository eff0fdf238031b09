//! Gaussian-process regression with an RBF kernel and zero prior mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::scale::{squared_distance, Standardizer};

/// Largest diagonal jitter tried when the kernel matrix is numerically singular.
const MAX_JITTER: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub length_scale: f64,
    /// Diagonal term actually used (requested noise plus any jitter).
    pub noise: f64,
    scaler: Standardizer,
    x: Vec<Vec<f64>>,
    alpha: Vec<f64>,
}

/// Median Euclidean distance between distinct training rows.
pub fn median_distance(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            d.push(squared_distance(&x[i], &x[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 { *m } else { 1.0 }
}

fn kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * length_scale * length_scale)).exp()
}

impl GpModel {
    /// `length_scale = None` picks the median pairwise distance of the
    /// standardized training features.
    pub fn fit(x: &[Vec<f64>], y: &[f64], length_scale: Option<f64>, noise: f64) -> Result<Self> {
        if noise < 0.0 {
            return Err(MlError::InvalidInput("noise must be >= 0".into()));
        }
        let scaler = Standardizer::fit(x);
        let xs = scaler.transform(x);
        let ls = length_scale.unwrap_or_else(|| median_distance(&xs));
        if !(ls > 0.0) {
            return Err(MlError::InvalidInput("length scale must be > 0".into()));
        }
        let n = xs.len();
        let k = DMatrix::from_fn(n, n, |i, j| kernel(&xs[i], &xs[j], ls));
        let rhs = DVector::from_column_slice(y);
        let mut diag = noise;
        loop {
            let mut kk = k.clone();
            for i in 0..n {
                kk[(i, i)] += diag;
            }
            if let Some(chol) = kk.cholesky() {
                let alpha = chol.solve(&rhs);
                if diag > noise {
                    log::warn!("gaussian process needed diagonal jitter {diag:e}");
                }
                return Ok(Self {
                    length_scale: ls,
                    noise: diag,
                    scaler,
                    x: xs,
                    alpha: alpha.iter().copied().collect(),
                });
            }
            diag = if diag < 1e-12 { 1e-12 } else { diag * 10.0 };
            if diag > MAX_JITTER {
                return Err(MlError::Numerical("kernel matrix is not positive definite".into()));
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let q = self.scaler.transform_row(row);
        self.x
            .iter()
            .zip(&self.alpha)
            .map(|(r, a)| a * kernel(r, &q, self.length_scale))
            .sum()
    }
}
