//! Gradient boosting on squared loss, with optional histogram splits and
//! gradient-based one-sided sampling (GOSS).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use qmem_core::rng;

use crate::tree::{fit_tree, fit_tree_binned, Binned, Tree, TreeParams};

/// Keep the `top_rate` share of rows with the largest |gradient|, plus a
/// random `other_rate` share of the rest reweighted by `(1 − top)/other`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Goss {
    pub top_rate: f64,
    pub other_rate: f64,
}

impl Default for Goss {
    fn default() -> Self {
        Self {
            top_rate: 0.2,
            other_rate: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    /// Bin count for histogram splits; `None` searches exact thresholds.
    pub bins: Option<usize>,
    pub goss: Option<Goss>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training RMSE before any tree, then after each round.
    pub train_rmse: Vec<f64>,
}

impl BoostedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

fn rmse_of(residual: &[f64]) -> f64 {
    (residual.iter().map(|r| r * r).sum::<f64>() / residual.len().max(1) as f64).sqrt()
}

/// Rows and weights for one GOSS round, from residuals `r` (the negative gradient).
fn goss_sample(r: &[f64], goss: &Goss, rng: &mut rng::Rng) -> (Vec<usize>, Vec<f64>) {
    let n = r.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[b].abs().total_cmp(&r[a].abs()).then(a.cmp(&b)));
    let n_top = ((goss.top_rate * n as f64).round() as usize).min(n);
    let n_other = ((goss.other_rate * n as f64).round() as usize).min(n - n_top);
    let mut rest = order.split_off(n_top);
    for k in 0..n_other {
        let j = rng.random_range(k..rest.len());
        rest.swap(k, j);
    }
    let mut weights = vec![1.0; n];
    let amplify = if goss.other_rate > 0.0 { (1.0 - goss.top_rate) / goss.other_rate } else { 1.0 };
    for &i in &rest[..n_other] {
        weights[i] = amplify;
    }
    order.extend_from_slice(&rest[..n_other]);
    order.sort_unstable();
    (order, weights)
}

pub fn fit_boosted(x: &[Vec<f64>], y: &[f64], params: &BoostParams, seed: u64) -> BoostedModel {
    let n = y.len();
    let init = y.iter().sum::<f64>() / n.max(1) as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - init).collect();
    let binned = params.bins.map(|b| Binned::new(x, b));
    // GOSS starts after the first 1/lr rounds, as in the reference method.
    let warmup = (1.0 / params.learning_rate).ceil() as usize;
    let mut trees = Vec::with_capacity(params.rounds);
    let mut train_rmse = vec![rmse_of(&residual)];
    for round in 0..params.rounds {
        let tree_seed = rng::derive_seed(seed, round as u64);
        let (rows, weights) = match params.goss {
            Some(g) if round >= warmup => {
                let (rows, w) = goss_sample(&residual, &g, &mut rng::stream(seed, 0x6055 + round as u64));
                (rows, Some(w))
            }
            _ => ((0..n).collect(), None),
        };
        let tree = match &binned {
            Some(b) => fit_tree_binned(x, &residual, rows, weights.as_deref(), b, &params.tree, tree_seed),
            None => fit_tree(x, &residual, rows, weights.as_deref(), &params.tree, tree_seed),
        };
        for (r, row) in residual.iter_mut().zip(x) {
            *r -= params.learning_rate * tree.predict_row(row);
        }
        train_rmse.push(rmse_of(&residual));
        trees.push(tree);
    }
    BoostedModel {
        init,
        learning_rate: params.learning_rate,
        trees,
        train_rmse,
    }
}
