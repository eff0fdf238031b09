//! k-nearest-neighbour regression on standardized features.

use serde::{Deserialize, Serialize};

use crate::scale::{squared_distance, Standardizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    scaler: Standardizer,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], k: usize) -> Self {
        let scaler = Standardizer::fit(x);
        Self {
            k: k.max(1),
            x: scaler.transform(x),
            y: y.to_vec(),
            scaler,
        }
    }

    /// Mean target of the k closest training rows; ties go to the lower index.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let q = self.scaler.transform_row(row);
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, &q), i))
            .collect();
        let k = self.k.min(d.len());
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, by_distance);
        }
        d[..k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let x = vec![vec![0.0], vec![1.0], vec![5.0], vec![6.0]];
        let y = vec![0.0, 1.0, 10.0, 20.0];
        let m1 = KnnModel::fit(&x, &y, 1);
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(m1.predict_row(r), *t);
        }
        let m2 = KnnModel::fit(&x, &y, 2);
        assert_eq!(m2.predict_row(&[0.4]), 0.5);
        let all = KnnModel::fit(&x, &y, 10);
        assert_eq!(all.predict_row(&[100.0]), 7.75);
    }
}
