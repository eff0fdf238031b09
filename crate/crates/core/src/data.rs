//! Parameter sampling, dataset generation and persistence.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dynamics::simulate;
use crate::error::{Error, Result};
use crate::loops::per_period_series;
use crate::rng;

/// Largest |F₁ − F₂| accepted for the two identical memristors of a coupled row.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Single,
    Coupled,
}

impl DatasetKind {
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            DatasetKind::Single => &["phi", "lambda"],
            DatasetKind::Coupled => &["c12", "l12", "phi", "lambda"],
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            DatasetKind::Single => &["phi", "lambda", "form_factor"],
            DatasetKind::Coupled => &["c12", "l12", "phi", "lambda", "form_factor", "form_factor_2"],
        }
    }

    pub fn n_features(self) -> usize {
        self.feature_names().len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Random,
    Grid { levels: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mode: SampleMode,
    /// Random draws fall in `(min, max]` instead of `[min, max)`.
    pub exclude_min: bool,
}

impl FeatureRange {
    pub fn random(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            min,
            max,
            mode: SampleMode::Random,
            exclude_min: false,
        }
    }

    pub fn grid(name: &str, min: f64, max: f64, levels: usize) -> Self {
        Self {
            mode: SampleMode::Grid { levels },
            ..Self::random(name, min, max)
        }
    }

    fn grid_values(&self, levels: usize) -> Vec<f64> {
        let step = (self.max - self.min) / (levels - 1) as f64;
        (0..levels)
            .map(|k| if k + 1 == levels { self.max } else { self.min + step * k as f64 })
            .collect()
    }

    fn draw(&self, rng: &mut rng::Rng) -> f64 {
        let u: f64 = rng.random();
        if self.exclude_min {
            self.max - u * (self.max - self.min)
        } else {
            (self.min + u * (self.max - self.min)).min(self.max)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: DatasetKind,
    /// One entry per feature of `kind`, in column order.
    pub features: Vec<FeatureRange>,
    pub seed: u64,
}

pub const LAMBDA_MAX: f64 = 100.0;
pub const C12_MAX: f64 = 2e-12;
pub const L12_MAX: f64 = 2e-8;

fn lambda_random() -> FeatureRange {
    FeatureRange {
        exclude_min: true,
        ..FeatureRange::random("lambda", 0.0, LAMBDA_MAX)
    }
}

impl ParamSpace {
    /// φ ∈ [0, 2π), λ ∈ (0, 100].
    pub fn single_random(seed: u64) -> Self {
        Self {
            kind: DatasetKind::Single,
            features: vec![FeatureRange::random("phi", 0.0, TAU), lambda_random()],
            seed,
        }
    }

    /// Adds C_c ∈ [0, 2 pF] and L_c ∈ [0, 20 nH] to the single ranges.
    pub fn coupled_random(seed: u64) -> Self {
        Self {
            kind: DatasetKind::Coupled,
            features: vec![
                FeatureRange::random("c12", 0.0, C12_MAX),
                FeatureRange::random("l12", 0.0, L12_MAX),
                FeatureRange::random("phi", 0.0, TAU),
                lambda_random(),
            ],
            seed,
        }
    }

    /// Full grid with `levels` points per feature. Couplings start at 0;
    /// φ spans [0.01, 6.22] and λ [0.1, 100].
    pub fn coupled_grid(levels: usize, seed: u64) -> Self {
        Self {
            kind: DatasetKind::Coupled,
            features: vec![
                FeatureRange::grid("c12", 0.0, C12_MAX, levels),
                FeatureRange::grid("l12", 0.0, L12_MAX, levels),
                FeatureRange::grid("phi", 0.01, 6.22, levels),
                FeatureRange::grid("lambda", 0.1, LAMBDA_MAX, levels),
            ],
            seed,
        }
    }

    pub fn single_grid(levels: usize, seed: u64) -> Self {
        Self {
            kind: DatasetKind::Single,
            features: vec![
                FeatureRange::grid("phi", 0.01, 6.22, levels),
                FeatureRange::grid("lambda", 0.1, LAMBDA_MAX, levels),
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        if names != self.kind.feature_names() {
            return Err(Error::config(format!(
                "features {names:?} do not match {:?}",
                self.kind.feature_names()
            )));
        }
        for f in &self.features {
            if !(f.min <= f.max) || !f.min.is_finite() || !f.max.is_finite() {
                return Err(Error::config(format!("range of {} is invalid", f.name)));
            }
            if let SampleMode::Grid { levels } = f.mode {
                if levels < 2 {
                    return Err(Error::config(format!("grid for {} needs >= 2 levels", f.name)));
                }
            }
        }
        Ok(())
    }

    pub fn bounds(&self, name: &str) -> Option<(f64, f64)> {
        self.features.iter().find(|f| f.name == name).map(|f| (f.min, f.max))
    }

    /// Row count produced by [`ParamSpace::sample`] for a request of `n`.
    pub fn row_count(&self, n: usize) -> usize {
        let grid: Vec<usize> = self
            .features
            .iter()
            .filter_map(|f| match f.mode {
                SampleMode::Grid { levels } => Some(levels),
                SampleMode::Random => None,
            })
            .collect();
        if grid.is_empty() {
            n
        } else {
            grid.iter().product()
        }
    }

    /// Feature rows in column order. Grid features form a Cartesian product
    /// (first feature slowest) and `n` is ignored; random features are drawn
    /// once per row from a single seeded stream.
    pub fn sample(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let count = self.row_count(n);
        if count == 0 {
            return Err(Error::config("sample size must be >= 1"));
        }
        let grids: Vec<Option<Vec<f64>>> = self
            .features
            .iter()
            .map(|f| match f.mode {
                SampleMode::Grid { levels } => Some(f.grid_values(levels)),
                SampleMode::Random => None,
            })
            .collect();
        let mut rng = rng::stream(self.seed, 0);
        let mut rows = Vec::with_capacity(count);
        for r in 0..count {
            // mixed-radix digits of r, last grid feature fastest
            let mut rem = r;
            let mut idx = vec![0usize; grids.len()];
            for (k, g) in grids.iter().enumerate().rev() {
                if let Some(values) = g {
                    idx[k] = rem % values.len();
                    rem /= values.len();
                }
            }
            let row = self
                .features
                .iter()
                .zip(&grids)
                .zip(&idx)
                .map(|((f, g), &i)| match g {
                    Some(values) => values[i],
                    None => f.draw(&mut rng),
                })
                .collect();
            rows.push(row);
        }
        Ok(rows)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub features: Vec<f64>,
    pub form_factor: f64,
    pub form_factor_2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn new(kind: DatasetKind) -> Self {
        Self { kind, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        self.kind.feature_names()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.form_factor).collect()
    }

    /// Values of a named CSV column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(k) = self.feature_names().iter().position(|&n| n == name) {
            return Some(self.rows.iter().map(|r| r.features[k]).collect());
        }
        match name {
            "form_factor" => Some(self.targets()),
            "form_factor_2" if self.kind == DatasetKind::Coupled => Some(
                self.rows
                    .iter()
                    .map(|r| r.form_factor_2.unwrap_or(r.form_factor))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// CSV with the kind's exact header and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.kind.header().join(","))?;
        for row in &self.rows {
            let mut line = String::new();
            for v in &row.features {
                line.push_str(&format!("{v:.16e},"));
            }
            line.push_str(&format!("{:.16e}", row.form_factor));
            if self.kind == DatasetKind::Coupled {
                line.push_str(&format!(",{:.16e}", row.form_factor_2.unwrap_or(row.form_factor)));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = reader.records();
        let header = match records.next() {
            None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
            Some(rec) => rec.map_err(|e| csv_error(&e))?,
        };
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        let kind = [DatasetKind::Single, DatasetKind::Coupled]
            .into_iter()
            .find(|k| names == k.header())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("unrecognized header {names:?}"),
            })?;
        let width = kind.header().len();
        let nf = kind.n_features();
        let mut ds = Dataset::new(kind);
        for rec in records {
            let rec = rec.map_err(|e| csv_error(&e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != width {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {width} columns, found {}", rec.len()),
                });
            }
            let values = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("{f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            ds.rows.push(DatasetRow {
                features: values[..nf].to_vec(),
                form_factor: values[nf],
                form_factor_2: (kind == DatasetKind::Coupled).then(|| values[nf + 1]),
            });
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn csv_error(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Targets of one parameter row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowTargets {
    pub form_factor: f64,
    pub form_factor_2: Option<f64>,
}

/// Simulates one feature row (columns as in `kind`) and returns the mean
/// per-period form factor of each memristor.
pub fn evaluate(kind: DatasetKind, features: &[f64], cfg: &SimConfig) -> Result<RowTargets> {
    if features.len() != kind.n_features() {
        return Err(Error::Dimension(format!(
            "expected {} features, got {}",
            kind.n_features(),
            features.len()
        )));
    }
    let integ = cfg.integrator(false);
    match kind {
        DatasetKind::Single => {
            let (phi, lambda) = (features[0], features[1]);
            let system = cfg.single_system(lambda)?;
            let traj = simulate(&[cfg.initial(phi)], &system, &integ)?;
            Ok(RowTargets {
                form_factor: per_period_series(&traj, 0)?.mean_form_factor,
                form_factor_2: None,
            })
        }
        DatasetKind::Coupled => {
            let (c12, l12, phi, lambda) = (features[0], features[1], features[2], features[3]);
            let system = cfg.pair_system(lambda, c12, l12)?;
            let init = [cfg.initial(phi), cfg.initial(phi)];
            let traj = simulate(&init, &system, &integ)?;
            let f1 = per_period_series(&traj, 0)?.mean_form_factor;
            let f2 = per_period_series(&traj, 1)?.mean_form_factor;
            if (f1 - f2).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::config(format!(
                    "form factors of identical memristors differ: {f1} vs {f2}"
                )));
            }
            Ok(RowTargets {
                form_factor: f1,
                form_factor_2: Some(f1),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowFailure {
    pub index: usize,
    pub features: Vec<f64>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct GenerateReport {
    pub dataset: Dataset,
    pub failures: Vec<RowFailure>,
}

/// Builds a worker pool; 0 workers means one per available core.
pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))
}

/// Samples `space` and simulates every row in parallel. Output order follows
/// the sample order; rows whose simulation fails are left out and reported.
pub fn generate(space: &ParamSpace, n: usize, cfg: &SimConfig, workers: usize) -> Result<GenerateReport> {
    cfg.validate()?;
    let rows = space.sample(n)?;
    let total = rows.len();
    let done = AtomicUsize::new(0);
    let step = (total / 10).max(1);
    let kind = space.kind;
    let results: Vec<Result<RowTargets>> = thread_pool(workers)?.install(|| {
        rows.par_iter()
            .map(|f| {
                let r = evaluate(kind, f, cfg);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k.is_multiple_of(step) || k == total {
                    log::info!("simulated {k}/{total} rows");
                }
                r
            })
            .collect()
    });

    let mut dataset = Dataset::new(kind);
    let mut failures = Vec::new();
    for (index, (features, res)) in rows.into_iter().zip(results).enumerate() {
        match res {
            Ok(t) => dataset.rows.push(DatasetRow {
                features,
                form_factor: t.form_factor,
                form_factor_2: t.form_factor_2,
            }),
            Err(e) => {
                log::warn!("row {index} failed: {e}");
                failures.push(RowFailure {
                    index,
                    features,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(GenerateReport { dataset, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
}

/// Quantile with linear interpolation between closest ranks of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize(name: &str, values: &[f64]) -> Result<ColumnSummary> {
    if values.is_empty() {
        return Err(Error::Empty(format!("column {name} has no values")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ColumnSummary {
        name: name.into(),
        count: n,
        mean,
        std,
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        q50: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub columns: Vec<ColumnSummary>,
}

const STAT_ROWS: [&str; 8] = ["count", "mean", "std", "min", "25%", "50%", "75%", "max"];

impl QuartileSummary {
    fn cell(c: &ColumnSummary, k: usize) -> f64 {
        [c.count as f64, c.mean, c.std, c.min, c.q25, c.q50, c.q75, c.max][k]
    }

    /// One row per statistic, one column per dataset column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "stat,{}", names.join(","))?;
        for (k, label) in STAT_ROWS.iter().enumerate() {
            let cells: Vec<String> = self
                .columns
                .iter()
                .map(|c| format!("{:.16e}", Self::cell(c, k)))
                .collect();
            writeln!(w, "{label},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let width = 14;
        let mut out = format!("{:<6}", "");
        for c in &self.columns {
            out.push_str(&format!("{:>width$}", c.name));
        }
        out.push('\n');
        for (k, label) in STAT_ROWS.iter().enumerate() {
            out.push_str(&format!("{label:<6}"));
            for c in &self.columns {
                let v = Self::cell(c, k);
                if k == 0 {
                    out.push_str(&format!("{v:>width$}"));
                } else {
                    out.push_str(&format!("{v:>width$.6e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Quartile description of every CSV column.
pub fn stats(ds: &Dataset) -> Result<QuartileSummary> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    let columns = ds
        .kind
        .header()
        .iter()
        .map(|name| summarize(name, &ds.column(name).expect("header column")))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuartileSummary { columns })
}
