//! Bagged and extremely randomized tree ensembles.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qmem_core::rng;

use crate::tree::{fit_tree, SplitRule, Tree, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Bootstrap resampling with repetition (random forest) versus the whole
    /// sample for every tree (extra-trees).
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn random_forest(n_trees: usize, tree: TreeParams) -> Self {
        Self {
            n_trees,
            tree: TreeParams { rule: SplitRule::Best, ..tree },
            bootstrap: true,
        }
    }

    pub fn extra_trees(n_trees: usize, tree: TreeParams) -> Self {
        Self {
            n_trees,
            tree: TreeParams { rule: SplitRule::Random, ..tree },
            bootstrap: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Trees are seeded from `(seed, tree index)`, so the result does not
    /// depend on how many threads build them.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Self {
        let n = y.len();
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|k| {
                let tree_seed = rng::derive_seed(seed, k as u64);
                let rows = if params.bootstrap {
                    let mut r = rng::stream(tree_seed, 0xb007);
                    (0..n).map(|_| r.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                fit_tree(x, y, rows, None, &params.tree, tree_seed)
            })
            .collect();
        Self { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..120)
            .map(|i| vec![(i as f64 * 0.61).sin() * 2.0, (i as f64 * 0.23).cos()])
            .collect();
        let y = x.iter().map(|r| r[0] * r[0] + r[1] + 0.3 * (r[0] * 7.0).sin()).collect();
        (x, y)
    }

    fn seed_variance(params: &ForestParams, query: &[f64]) -> f64 {
        let (x, y) = problem();
        let preds: Vec<f64> = (0..12).map(|s| Forest::fit(&x, &y, params, s).predict_row(query)).collect();
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (preds.len() - 1) as f64
    }

    #[test]
    fn more_trees_reduce_seed_variance() {
        let q = [0.3, 0.1];
        for make in [ForestParams::random_forest, ForestParams::extra_trees] {
            let small = seed_variance(&make(10, TreeParams::default()), &q);
            let large = seed_variance(&make(100, TreeParams::default()), &q);
            assert!(large < small, "{large} !< {small}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = problem();
        let p = ForestParams::extra_trees(20, TreeParams::default());
        assert_eq!(Forest::fit(&x, &y, &p, 5), Forest::fit(&x, &y, &p, 5));
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = single.install(|| Forest::fit(&x, &y, &p, 5));
        assert_eq!(serial, Forest::fit(&x, &y, &p, 5));
    }
}
