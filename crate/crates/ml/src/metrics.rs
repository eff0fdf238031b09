//! Regression scores.

use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub r2: f64,
    pub adjusted_r2: f64,
    pub rmse: f64,
    pub fit_seconds: f64,
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(MlError::Dimension(format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(MlError::InvalidInput("no samples to score".into()));
    }
    Ok(())
}

/// `1 − SS_res / SS_tot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MlError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `1 − (1 − R²)(n − 1)/(n − p − 1)` for `n` samples and `p` features.
pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(MlError::InvalidInput(format!("adjusted R² needs n > p + 1 (n = {n}, p = {p})")));
    }
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

pub fn evaluate(y: &[f64], y_hat: &[f64], p: usize, fit_seconds: f64) -> Result<EvalMetrics> {
    let r2 = r2(y, y_hat)?;
    Ok(EvalMetrics {
        r2,
        adjusted_r2: adjusted_r2(r2, y.len(), p)?,
        rmse: rmse(y, y_hat)?,
        fit_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(r2(&y, &[2.0; 3]).unwrap(), 0.0);
        assert!((r2(&y, &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&y, &[1.0, 2.0, 4.0]).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((adjusted_r2(0.5, 100, 2).unwrap() - 0.489_690_721_649_484_5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(r2(&[1.0, 1.0], &[1.0, 2.0]), Err(MlError::ZeroVariance)));
        assert!(r2(&[1.0], &[1.0, 2.0]).is_err());
        assert!(adjusted_r2(0.5, 3, 2).is_err());
    }

    #[test]
    fn adjusted_never_exceeds_plain() {
        for &r in &[-0.5, 0.0, 0.3, 0.99, 1.0] {
            assert!(adjusted_r2(r, 50, 4).unwrap() <= r + 1e-15);
        }
    }
}
