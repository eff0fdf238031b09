//! Fit every model kind on one split and rank them.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use qmem_core::data::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::metrics::{evaluate, EvalMetrics};
use crate::regressor::{Hyperparams, ModelKind, Regressor};
use crate::split::{split_indices, take, SplitSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: ModelKind,
    pub metrics: Option<EvalMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    /// Descending adjusted R²; failed models last, in input order.
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    pub fn get(&self, kind: ModelKind) -> Option<&LeaderboardEntry> {
        self.entries.iter().find(|e| e.model == kind)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "model", "adjusted_r2", "r2", "rmse", "fit_seconds", "error"])?;
        for (rank, e) in self.entries.iter().enumerate() {
            let num = |f: fn(&EvalMetrics) -> f64| e.metrics.as_ref().map(|m| format!("{:.6}", f(m))).unwrap_or_default();
            out.write_record([
                (rank + 1).to_string(),
                e.model.to_string(),
                num(|m| m.adjusted_r2),
                num(|m| m.r2),
                num(|m| m.rmse),
                num(|m| m.fit_seconds),
                e.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |source| MlError::Io {
            path: path.to_path_buf(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io)?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(io)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<4} {:<17} {:>12} {:>10} {:>10} {:>10}\n",
            "rank", "model", "adjusted_r2", "r2", "rmse", "fit_s"
        );
        for (rank, e) in self.entries.iter().enumerate() {
            match (&e.metrics, &e.error) {
                (Some(m), _) => s.push_str(&format!(
                    "{:<4} {:<17} {:>12.4} {:>10.4} {:>10.5} {:>10.3}\n",
                    rank + 1,
                    e.model.name(),
                    m.adjusted_r2,
                    m.r2,
                    m.rmse,
                    m.fit_seconds
                )),
                (None, err) => s.push_str(&format!(
                    "{:<4} {:<17} error: {}\n",
                    rank + 1,
                    e.model.name(),
                    err.as_deref().unwrap_or("unknown")
                )),
            }
        }
        s
    }
}

fn run_one(
    kind: ModelKind,
    params: Hyperparams,
    seed: u64,
    train: &(Vec<Vec<f64>>, Vec<f64>),
    test: &(Vec<Vec<f64>>, Vec<f64>),
) -> Result<EvalMetrics> {
    let mut model = Regressor::with_params(kind, params, seed);
    let start = Instant::now();
    model.fit(&train.0, &train.1)?;
    let secs = start.elapsed().as_secs_f64();
    let pred = model.predict(&test.0)?;
    evaluate(&test.1, &pred, model.n_features(), secs)
}

/// Benchmarks `models` with explicit hyperparameters. A model that fails is
/// kept in the table with its error message.
pub fn benchmark_with(ds: &Dataset, spec: &SplitSpec, models: &[(ModelKind, Hyperparams)]) -> Result<Leaderboard> {
    let split = split_indices(ds.len(), spec)?;
    let (x, y) = (ds.features(), ds.targets());
    let train = take(&x, &y, &split.train);
    let test = take(&x, &y, &split.test);
    let constant = |v: &[f64]| v.iter().all(|&t| t == v[0]);
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for &(kind, params) in models {
        let outcome = if constant(&y) {
            Err(MlError::ZeroVariance)
        } else {
            run_one(kind, params, spec.seed, &train, &test)
        };
        match outcome {
            Ok(m) => {
                log::info!("{kind}: adjusted R² {:.4}, {:.2}s", m.adjusted_r2, m.fit_seconds);
                ok.push(LeaderboardEntry {
                    model: kind,
                    metrics: Some(m),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("{kind}: {e}");
                failed.push(LeaderboardEntry {
                    model: kind,
                    metrics: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let key = |e: &LeaderboardEntry| e.metrics.map_or(f64::NEG_INFINITY, |m| m.adjusted_r2);
    ok.sort_by(|a, b| key(b).total_cmp(&key(a)));
    ok.extend(failed);
    Ok(Leaderboard {
        n_train: split.train.len(),
        n_test: split.test.len(),
        n_features: ds.kind.n_features(),
        entries: ok,
    })
}

/// Benchmarks `kinds` with their default hyperparameters.
pub fn benchmark(ds: &Dataset, spec: &SplitSpec, kinds: &[ModelKind]) -> Result<Leaderboard> {
    let models: Vec<_> = kinds.iter().map(|&k| (k, Hyperparams::defaults(k))).collect();
    benchmark_with(ds, spec, &models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qmem_core::data::{DatasetKind, DatasetRow};

    fn synthetic(n: usize, f: impl Fn(f64, f64) -> f64) -> Dataset {
        let mut ds = Dataset::new(DatasetKind::Single);
        for i in 0..n {
            let phi = (i as f64 * 0.618).fract() * 6.0;
            let lambda = (i as f64 * 0.414).fract() * 100.0;
            ds.rows.push(DatasetRow {
                features: vec![phi, lambda],
                form_factor: f(phi, lambda),
                form_factor_2: None,
            });
        }
        ds
    }

    fn quick(kind: ModelKind) -> (ModelKind, Hyperparams) {
        let mut p = Hyperparams::defaults(kind);
        p.n_trees = 30;
        p.rounds = 60;
        (kind, p)
    }

    #[test]
    fn sorted_by_adjusted_r2() {
        let ds = synthetic(150, |p, l| p.sin() * 0.1 + 0.3 - l * 1e-3);
        let models: Vec<_> = ModelKind::ALL.iter().map(|&k| quick(k)).collect();
        let board = benchmark_with(&ds, &SplitSpec::default(), &models).unwrap();
        assert_eq!(board.entries.len(), 7);
        assert_eq!((board.n_train, board.n_test), (100, 50));
        let scores: Vec<f64> = board.entries.iter().map(|e| e.metrics.unwrap().adjusted_r2).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        for e in &board.entries {
            let m = e.metrics.unwrap();
            assert!(m.adjusted_r2 <= m.r2 && m.rmse >= 0.0);
        }
        let mut csv = Vec::new();
        board.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("rank,model,adjusted_r2,r2,rmse,fit_seconds,error\n1,"));
        assert_eq!(board.to_table().lines().count(), 8);
    }

    #[test]
    fn constant_target_rejects_every_model() {
        let ds = synthetic(30, |_, _| 0.25);
        let board = benchmark(&ds, &SplitSpec::default(), &ModelKind::ALL).unwrap();
        assert_eq!(board.entries.len(), 7);
        for e in &board.entries {
            assert!(e.metrics.is_none());
            assert!(e.error.as_deref().unwrap().contains("zero variance"));
        }
    }

    #[test]
    fn too_few_rows() {
        let ds = synthetic(2, |p, _| p);
        assert!(benchmark(&ds, &SplitSpec::default(), &[ModelKind::Knn]).is_err());
    }
}
