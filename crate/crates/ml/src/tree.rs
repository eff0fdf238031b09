//! Weighted CART regression trees with exact, random-threshold or
//! histogram split search.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use qmem_core::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    k = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Best threshold over all midpoints between distinct values.
    Best,
    /// One uniform random threshold per feature.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
    pub rule: SplitRule,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(12),
            min_samples_leaf: 2,
            max_features: None,
            rule: SplitRule::Best,
        }
    }
}

/// Features quantized into at most `max_bins` bins of the training data.
#[derive(Clone, Debug)]
pub struct Binned {
    /// Per feature: bin boundaries, ascending.
    edges: Vec<Vec<f64>>,
    /// Per feature and bin: smallest and largest training value in the bin.
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    /// codes[row][feature]
    codes: Vec<Vec<u32>>,
}

impl Binned {
    pub fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len();
        let max_bins = max_bins.max(2);
        let mut edges = Vec::with_capacity(p);
        for f in 0..p {
            let mut v: Vec<f64> = x.iter().map(|r| r[f]).collect();
            v.sort_by(f64::total_cmp);
            let mut distinct: Vec<(f64, usize)> = Vec::new();
            for &val in &v {
                match distinct.last_mut() {
                    Some((d, c)) if *d == val => *c += 1,
                    _ => distinct.push((val, 1)),
                }
            }
            let mut e = Vec::new();
            if distinct.len() <= max_bins {
                for w in distinct.windows(2) {
                    e.push(midpoint(w[0].0, w[1].0));
                }
            } else {
                // equal-count grouping of the distinct values
                let per_bin = n as f64 / max_bins as f64;
                let mut seen = 0usize;
                for k in 0..distinct.len() - 1 {
                    seen += distinct[k].1;
                    if e.len() + 1 < max_bins && seen as f64 >= per_bin * (e.len() + 1) as f64 {
                        e.push(midpoint(distinct[k].0, distinct[k + 1].0));
                    }
                }
            }
            edges.push(e);
        }
        let codes: Vec<Vec<u32>> = x
            .iter()
            .map(|r| {
                (0..p)
                    .map(|f| edges[f].partition_point(|&t| t < r[f]) as u32)
                    .collect()
            })
            .collect();
        let mut lo: Vec<Vec<f64>> = edges.iter().map(|e| vec![f64::INFINITY; e.len() + 1]).collect();
        let mut hi: Vec<Vec<f64>> = edges.iter().map(|e| vec![f64::NEG_INFINITY; e.len() + 1]).collect();
        for (r, c) in x.iter().zip(&codes) {
            for f in 0..p {
                let b = c[f] as usize;
                lo[f][b] = lo[f][b].min(r[f]);
                hi[f][b] = hi[f][b].max(r[f]);
            }
        }
        Self { edges, lo, hi, codes }
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }
}

/// Split point strictly between `a < b`, falling back to `a` when the
/// midpoint rounds onto `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b { m } else { a }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    w: Option<&'a [f64]>,
    binned: Option<&'a Binned>,
    params: TreeParams,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn weight(&self, i: usize) -> f64 {
        self.w.map_or(1.0, |w| w[i])
    }

    fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(w, s), &i| {
            let wi = self.weight(i);
            (w + wi, s + wi * self.y[i])
        })
    }

    fn features(&mut self) -> Vec<usize> {
        let p = self.x.first().map_or(0, Vec::len);
        match self.params.max_features {
            Some(m) if m < p => {
                let mut all: Vec<usize> = (0..p).collect();
                for k in 0..m {
                    let j = self.rng.random_range(k..p);
                    all.swap(k, j);
                }
                let mut chosen = all[..m].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..p).collect(),
        }
    }

    fn better(best: &Option<Candidate>, gain: f64) -> bool {
        gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain)
    }

    fn exact_split(&self, rows: &[usize], f: usize, total: (f64, f64), best: &mut Option<Candidate>) {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
        let (wt, st) = total;
        let base = st * st / wt;
        // Sums are accumulated per distinct value so the gains match the
        // histogram path bit for bit when every value has its own bin.
        let (mut nl, mut wl, mut sl) = (0usize, 0.0, 0.0);
        let mut k = 0;
        while k < order.len() {
            let a = self.x[order[k]][f];
            let (mut gw, mut gs) = (0.0, 0.0);
            while k < order.len() && self.x[order[k]][f] == a {
                let i = order[k];
                let wi = self.weight(i);
                gw += wi;
                gs += wi * self.y[i];
                nl += 1;
                k += 1;
            }
            wl += gw;
            sl += gs;
            if k == order.len() {
                break;
            }
            if nl < min_leaf || order.len() - nl < min_leaf {
                continue;
            }
            let (wr, sr) = (wt - wl, st - sl);
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let gain = sl * sl / wl + sr * sr / wr - base;
            if Self::better(best, gain) {
                let b = self.x[order[k]][f];
                *best = Some(Candidate { feature: f, threshold: midpoint(a, b), gain });
            }
        }
    }

    fn histogram_split(&self, binned: &Binned, rows: &[usize], f: usize, total: (f64, f64), best: &mut Option<Candidate>) {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let nb = binned.n_bins(f);
        let mut count = vec![0usize; nb];
        let mut wsum = vec![0.0; nb];
        let mut ssum = vec![0.0; nb];
        for &i in rows {
            let b = binned.codes[i][f] as usize;
            let wi = self.weight(i);
            count[b] += 1;
            wsum[b] += wi;
            ssum[b] += wi * self.y[i];
        }
        let occupied: Vec<usize> = (0..nb).filter(|&b| count[b] > 0).collect();
        let (wt, st) = total;
        let base = st * st / wt;
        let (mut nl, mut wl, mut sl) = (0usize, 0.0, 0.0);
        for pair in occupied.windows(2) {
            let (b, next) = (pair[0], pair[1]);
            nl += count[b];
            wl += wsum[b];
            sl += ssum[b];
            if nl < min_leaf || rows.len() - nl < min_leaf {
                continue;
            }
            let (wr, sr) = (wt - wl, st - sl);
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let gain = sl * sl / wl + sr * sr / wr - base;
            if Self::better(best, gain) {
                let threshold = midpoint(binned.hi[f][b], binned.lo[f][next]);
                *best = Some(Candidate { feature: f, threshold, gain });
            }
        }
    }

    fn random_split(&mut self, rows: &[usize], f: usize, total: (f64, f64), best: &mut Option<Candidate>) {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(self.x[i][f]), hi.max(self.x[i][f]))
        });
        if !(lo < hi) {
            return;
        }
        let u: f64 = self.rng.random();
        let mut threshold = lo + u * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        let (mut nl, mut wl, mut sl) = (0usize, 0.0, 0.0);
        for &i in rows {
            if self.x[i][f] <= threshold {
                let wi = self.weight(i);
                nl += 1;
                wl += wi;
                sl += wi * self.y[i];
            }
        }
        if nl < min_leaf || rows.len() - nl < min_leaf {
            return;
        }
        let (wt, st) = total;
        let (wr, sr) = (wt - wl, st - sl);
        if wl <= 0.0 || wr <= 0.0 {
            return;
        }
        let gain = sl * sl / wl + sr * sr / wr - st * st / wt;
        if Self::better(best, gain) {
            *best = Some(Candidate { feature: f, threshold, gain });
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let total = self.sums(&rows);
        let value = if total.0 > 0.0 { total.1 / total.0 } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value });

        let min_leaf = self.params.min_samples_leaf.max(1);
        let first = self.y[rows[0]];
        if self.params.max_depth.is_some_and(|d| depth >= d)
            || rows.len() < 2 * min_leaf
            || rows.iter().all(|&i| self.y[i] == first)
            || total.0 <= 0.0
        {
            return id;
        }

        let mut best = None;
        for f in self.features() {
            match (self.params.rule, self.binned) {
                (SplitRule::Random, _) => self.random_split(&rows, f, total, &mut best),
                (SplitRule::Best, Some(b)) => self.histogram_split(b, &rows, f, total, &mut best),
                (SplitRule::Best, None) => self.exact_split(&rows, f, total, &mut best),
            }
        }
        let Some(c) = best else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][c.feature] <= c.threshold);
        if l.is_empty() || r.is_empty() {
            return id;
        }
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: c.feature,
            threshold: c.threshold,
            left,
            right,
        };
        id
    }
}

/// Fits a tree on `rows` of `(x, y)`; rows may repeat (bootstrap samples).
/// `weights`, when given, are indexed like `y`.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    weights: Option<&[f64]>,
    params: &TreeParams,
    seed: u64,
) -> Tree {
    build(x, y, rows, weights, None, params, seed)
}

/// Like [`fit_tree`] with split candidates restricted to the bins of `binned`,
/// which must have been built from the same `x`.
pub fn fit_tree_binned(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    weights: Option<&[f64]>,
    binned: &Binned,
    params: &TreeParams,
    seed: u64,
) -> Tree {
    build(x, y, rows, weights, Some(binned), params, seed)
}

fn build(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    weights: Option<&[f64]>,
    binned: Option<&Binned>,
    params: &TreeParams,
    seed: u64,
) -> Tree {
    if rows.is_empty() {
        return Tree { nodes: vec![Node::Leaf { value: 0.0 }] };
    }
    let mut b = Builder {
        x,
        y,
        w: weights,
        binned,
        params: *params,
        rng: rng::stream(seed, 0x7ee),
        nodes: Vec::new(),
    };
    b.grow(rows, 0);
    Tree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn unlimited_tree_interpolates_distinct_data() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.77).sin(), i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let params = TreeParams { max_depth: None, min_samples_leaf: 1, ..Default::default() };
        let t = fit_tree(&x, &y, all(40), None, &params, 0);
        for (r, v) in x.iter().zip(&y) {
            assert_eq!(t.predict_row(r), *v);
        }
    }

    #[test]
    fn step_function_is_found() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 3.0 }).collect();
        let t = fit_tree(&x, &y, all(10), None, &TreeParams::default(), 0);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict_row(&[3.4]), 1.0);
        assert_eq!(t.predict_row(&[3.6]), 3.0);
    }

    #[test]
    fn ties_prefer_lower_feature() {
        // both features separate y identically
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let t = fit_tree(&x, &y, all(8), None, &TreeParams::default(), 0);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i as f64).sqrt()).collect();
        let t = fit_tree(&x, &y, all(64), None, &TreeParams { max_depth: Some(3), ..Default::default() }, 0);
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
        let t = fit_tree(&x, &y, all(64), None, &TreeParams { max_depth: None, min_samples_leaf: 16, ..Default::default() }, 0);
        assert!(t.n_leaves() <= 4);
    }

    #[test]
    fn weights_shift_leaf_values() {
        let x = vec![vec![0.0], vec![0.0]];
        let y = vec![0.0, 1.0];
        let t = fit_tree(&x, &y, all(2), Some(&[1.0, 3.0]), &TreeParams::default(), 0);
        assert_eq!(t.predict_row(&[0.0]), 0.75);
    }

    #[test]
    fn binning_groups_values() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let b = Binned::new(&x, 10);
        assert_eq!(b.n_bins(0), 10);
        let small = Binned::new(&x[..5], 10);
        assert_eq!(small.n_bins(0), 5);
        assert_eq!(small.edges[0], vec![0.5, 1.5, 2.5, 3.5]);
    }

    proptest! {
        #[test]
        fn histogram_matches_exact_with_enough_bins(
            data in prop::collection::vec((0u8..12, 0u8..12, -5.0f64..5.0), 10..60),
        ) {
            let x: Vec<Vec<f64>> = data.iter().map(|&(a, b, _)| vec![a as f64 * 0.5, b as f64]).collect();
            let y: Vec<f64> = data.iter().map(|&(_, _, v)| v).collect();
            let params = TreeParams { max_depth: Some(6), min_samples_leaf: 1, ..Default::default() };
            let exact = fit_tree(&x, &y, all(x.len()), None, &params, 0);
            let binned = Binned::new(&x, 64);
            let hist = fit_tree_binned(&x, &y, all(x.len()), None, &binned, &params, 0);
            for a in 0..24 {
                for b in 0..12 {
                    let q = [a as f64 * 0.25, b as f64 + 0.3];
                    prop_assert!((exact.predict_row(&q) - hist.predict_row(&q)).abs() <= 1e-10);
                }
            }
        }
    }
}
