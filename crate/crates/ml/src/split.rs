//! Seeded train/test partition.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 2.0 / 3.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` and keeps the first `floor(n · fraction)` indices for training.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(MlError::InvalidInput("train fraction must lie in (0, 1)".into()));
    }
    if n < 3 {
        return Err(MlError::InvalidInput(format!("need at least 3 rows to split, got {n}")));
    }
    // The small offset keeps exact products such as 3 · 2/3 from rounding down.
    let n_train = ((n as f64 * spec.train_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut qmem_core::rng::stream(spec.seed, 0x5b11));
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}

/// Rows of `x` and `y` at `idx`.
pub fn take(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
}
