//! Surrogate-driven parameter search and the optimal/sub-optimal comparison.

use std::io::Write;
use std::path::Path;

use qmem_core::config::SimConfig;
use qmem_core::data::{self, DatasetKind, ParamSpace};
use qmem_core::dynamics::{simulate, Trajectory};
use qmem_core::entanglement::{concurrence_series, ConcurrenceSeries};
use qmem_core::loops::{per_period_series, PeriodSeries};
use qmem_core::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::regressor::Regressor;

/// Anything that scores a feature vector.
pub trait Surrogate: Sync {
    fn score(&self, x: &[f64]) -> Result<f64>;
}

impl Surrogate for Regressor {
    fn score(&self, x: &[f64]) -> Result<f64> {
        self.predict_row(x)
    }
}

/// Wraps a plain function as a surrogate.
pub struct FnSurrogate<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Surrogate for FnSurrogate<F> {
    fn score(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Maximize,
    Minimize,
}

impl Objective {
    fn sign(self) -> f64 {
        match self {
            Objective::Maximize => 1.0,
            Objective::Minimize => -1.0,
        }
    }
}

/// Smallest λ the search visits.
pub const LAMBDA_SEARCH_MIN: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Inclusive `(min, max)` per feature; `min == max` pins a feature.
    pub bounds: Vec<(f64, f64)>,
    pub n_random_starts: usize,
    /// Coordinate passes per refined start.
    pub refine_iters: usize,
    /// How many of the best random starts get refined.
    pub n_refined: usize,
    pub objective: Objective,
    pub verify: bool,
    pub seed: u64,
}

impl SearchSpec {
    pub fn new(bounds: Vec<(f64, f64)>, objective: Objective, seed: u64) -> Self {
        Self {
            bounds,
            n_random_starts: 512,
            refine_iters: 100,
            n_refined: 8,
            objective,
            verify: true,
            seed,
        }
    }

    /// Bounds of the random-mode ranges of `kind`, with λ starting at
    /// [`LAMBDA_SEARCH_MIN`] instead of the open end at 0.
    pub fn for_kind(kind: DatasetKind, objective: Objective, seed: u64) -> Self {
        let space = match kind {
            DatasetKind::Single => ParamSpace::single_random(seed),
            DatasetKind::Coupled => ParamSpace::coupled_random(seed),
        };
        let bounds = space
            .features
            .iter()
            .map(|f| if f.name == "lambda" { (LAMBDA_SEARCH_MIN, f.max) } else { (f.min, f.max) })
            .collect();
        Self::new(bounds, objective, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(MlError::InvalidInput("search needs at least one feature".into()));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(MlError::InvalidInput(format!("bad bounds for feature {j}: [{lo}, {hi}]")));
            }
        }
        if self.n_random_starts == 0 {
            return Err(MlError::InvalidInput("need at least one random start".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub features: Vec<f64>,
    pub surrogate_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub objective: Objective,
    pub best_features: Vec<f64>,
    pub surrogate_value: f64,
    pub simulated_value: Option<f64>,
    /// Every evaluated candidate, in evaluation order.
    pub trace: Vec<Candidate>,
}

impl SearchResult {
    pub fn write_trace_csv<W: Write>(&self, mut w: W, names: &[&str]) -> std::io::Result<()> {
        writeln!(w, "{},surrogate", names.join(","))?;
        for c in &self.trace {
            for v in &c.features {
                write!(w, "{v:.12e},")?;
            }
            writeln!(w, "{:.12e}", c.surrogate_value)?;
        }
        Ok(())
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;
/// Golden-section evaluations per coordinate line search.
const LINE_EVALS: usize = 24;

struct Tracker<'a, S: Surrogate> {
    model: &'a S,
    sign: f64,
    trace: Vec<Candidate>,
}

impl<S: Surrogate> Tracker<'_, S> {
    /// Signed score, so larger is always better.
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let v = self.model.score(x)?;
        self.trace.push(Candidate {
            features: x.to_vec(),
            surrogate_value: v,
        });
        Ok(self.sign * v)
    }

    /// Golden-section search of coordinate `j` over `[lo, hi]`; keeps `x`
    /// unless a strictly better point is found.
    fn line_search(&mut self, x: &mut [f64], fx: &mut f64, j: usize, lo: f64, hi: f64) -> Result<()> {
        let (mut a, mut b) = (lo, hi);
        let mut probe = x.to_vec();
        let mut at = |t: f64, me: &mut Self| -> Result<(f64, f64)> {
            probe[j] = t;
            Ok((t, me.eval(&probe)?))
        };
        let mut c = at(b - INV_PHI * (b - a), self)?;
        let mut d = at(a + INV_PHI * (b - a), self)?;
        let mut best = if c.1 >= d.1 { c } else { d };
        for _ in 2..LINE_EVALS {
            if c.1 >= d.1 {
                b = d.0;
                d = c;
                c = at(b - INV_PHI * (b - a), self)?;
            } else {
                a = c.0;
                c = d;
                d = at(a + INV_PHI * (b - a), self)?;
            }
            for p in [c, d] {
                if p.1 > best.1 {
                    best = p;
                }
            }
        }
        if best.1 > *fx {
            x[j] = best.0;
            *fx = best.1;
        }
        Ok(())
    }
}

/// Random multistart followed by coordinate-wise golden-section refinement of
/// the best starts. Each refinement pass searches a window around the current
/// point that halves whenever a full pass brings no improvement.
pub fn optimize_surrogate<S: Surrogate>(model: &S, spec: &SearchSpec) -> Result<SearchResult> {
    spec.validate()?;
    let p = spec.bounds.len();
    let mut rng = rng::stream(spec.seed, 0x5ea2c4);
    let starts: Vec<Vec<f64>> = (0..spec.n_random_starts)
        .map(|_| {
            spec.bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect();
    let values = starts
        .par_iter()
        .map(|x| model.score(x))
        .collect::<Result<Vec<f64>>>()?;
    let sign = spec.objective.sign();
    let mut tracker = Tracker {
        model,
        sign,
        trace: starts
            .iter()
            .zip(&values)
            .map(|(x, &v)| Candidate {
                features: x.clone(),
                surrogate_value: v,
            })
            .collect(),
    };

    let mut order: Vec<usize> = (0..starts.len()).collect();
    order.sort_by(|&a, &b| (sign * values[b]).total_cmp(&(sign * values[a])).then(a.cmp(&b)));
    let free: Vec<usize> = (0..p).filter(|&j| spec.bounds[j].1 > spec.bounds[j].0).collect();
    for &s in order.iter().take(spec.n_refined) {
        let mut x = starts[s].clone();
        let mut fx = sign * values[s];
        let mut width: Vec<f64> = spec.bounds.iter().map(|(lo, hi)| (hi - lo) / 2.0).collect();
        for _ in 0..spec.refine_iters {
            let before = fx;
            for &j in &free {
                let (lo, hi) = spec.bounds[j];
                let a = (x[j] - width[j]).max(lo);
                let b = (x[j] + width[j]).min(hi);
                tracker.line_search(&mut x, &mut fx, j, a, b)?;
            }
            if fx <= before {
                for w in &mut width {
                    *w /= 2.0;
                }
                if free.iter().all(|&j| width[j] < 1e-12 * (spec.bounds[j].1 - spec.bounds[j].0)) {
                    break;
                }
            }
        }
    }

    let trace = tracker.trace;
    // First occurrence wins ties, so the result is independent of refinement order.
    let best = trace
        .iter()
        .enumerate()
        .max_by(|(i, a), (k, b)| {
            (sign * a.surrogate_value)
                .total_cmp(&(sign * b.surrogate_value))
                .then(k.cmp(i))
        })
        .map(|(_, c)| c.clone())
        .expect("trace is non-empty");
    Ok(SearchResult {
        objective: spec.objective,
        best_features: best.features,
        surrogate_value: best.surrogate_value,
        simulated_value: None,
        trace,
    })
}

/// Runs [`optimize_surrogate`] and, when `spec.verify` is set, scores the
/// best candidate with `verifier` (normally the simulator).
pub fn optimize<S, V>(model: &S, spec: &SearchSpec, verifier: V) -> Result<SearchResult>
where
    S: Surrogate,
    V: FnOnce(&[f64]) -> Result<f64>,
{
    let mut result = optimize_surrogate(model, spec)?;
    if spec.verify {
        result.simulated_value = Some(verifier(&result.best_features)?);
    }
    Ok(result)
}

/// Verifier that simulates a row of `kind` and returns its mean per-period
/// form factor.
pub fn simulator(kind: DatasetKind, cfg: &SimConfig) -> impl Fn(&[f64]) -> Result<f64> + '_ {
    move |x| Ok(data::evaluate(kind, x, cfg)?.form_factor)
}

/// Periods simulated by [`compare`].
pub const COMPARE_PERIODS: usize = 20;
/// Periods averaged for the late-time concurrence level.
pub const LATE_PERIODS: usize = 5;

/// One side of a comparison.
#[derive(Clone, Debug)]
pub struct CompareSide {
    pub features: Vec<f64>,
    pub trajectory: Trajectory,
    pub form_factor: PeriodSeries<f64>,
    pub concurrence: ConcurrenceSeries,
}

impl CompareSide {
    pub fn peak_concurrence(&self) -> f64 {
        self.concurrence.peak()
    }

    /// Mean concurrence over the last [`LATE_PERIODS`] periods.
    pub fn late_concurrence(&self) -> f64 {
        let spp = self.trajectory.steps_per_period;
        let v = &self.concurrence.values;
        let tail = &v[v.len().saturating_sub(LATE_PERIODS * spp + 1)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct CompareReport {
    pub optimal: CompareSide,
    pub suboptimal: CompareSide,
}

impl CompareReport {
    /// Optimal form factor strictly above the sub-optimal one in every period.
    pub fn form_factor_dominates(&self) -> bool {
        let a = self.optimal.form_factor.form_factors();
        let b = self.suboptimal.form_factor.form_factors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x > y)
    }

    pub fn peak_dominates(&self) -> bool {
        self.optimal.peak_concurrence() > self.suboptimal.peak_concurrence()
    }

    /// The sub-optimal concurrence has fallen further by the last periods.
    pub fn suboptimal_decays_faster(&self) -> bool {
        self.optimal.late_concurrence() > self.suboptimal.late_concurrence()
    }

    pub fn summary(&self) -> String {
        let side = |name: &str, s: &CompareSide| {
            format!(
                "{name}: features {:?}\n  mean form factor {:.6}\n  peak concurrence {:.6}\n  late concurrence {:.6}\n",
                s.features,
                s.form_factor.mean_form_factor,
                s.peak_concurrence(),
                s.late_concurrence()
            )
        };
        format!(
            "{}{}form factor higher in every period: {}\npeak concurrence higher: {}\nsub-optimal decays faster: {}\n",
            side("optimal", &self.optimal),
            side("suboptimal", &self.suboptimal),
            self.form_factor_dominates(),
            self.peak_dominates(),
            self.suboptimal_decays_faster()
        )
    }

    /// Writes `optimal.csv`, `suboptimal.csv`, `formfactor_compare.csv`,
    /// `concurrence_compare.csv` and `summary.txt` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| MlError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        self.optimal.trajectory.save_csv(&dir.join("optimal.csv"))?;
        self.suboptimal.trajectory.save_csv(&dir.join("suboptimal.csv"))?;

        let path = dir.join("formfactor_compare.csv");
        let mut s = String::from("period,optimal,suboptimal\n");
        let a = self.optimal.form_factor.form_factors();
        let b = self.suboptimal.form_factor.form_factors();
        for (k, (x, y)) in a.iter().zip(&b).enumerate() {
            s.push_str(&format!("{k},{x:.12e},{y:.12e}\n"));
        }
        std::fs::write(&path, s).map_err(io(&path))?;

        let path = dir.join("concurrence_compare.csv");
        let mut s = String::from("t,optimal,suboptimal\n");
        let (ca, cb) = (&self.optimal.concurrence, &self.suboptimal.concurrence);
        for k in 0..ca.values.len().min(cb.values.len()) {
            s.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", ca.times[k], ca.values[k], cb.values[k]));
        }
        std::fs::write(&path, s).map_err(io(&path))?;

        let path = dir.join("summary.txt");
        std::fs::write(&path, self.summary()).map_err(io(&path))
    }
}

fn simulate_side(features: &[f64], cfg: &SimConfig) -> Result<CompareSide> {
    let [c12, l12, phi, lambda] = features else {
        return Err(MlError::Dimension(format!(
            "comparison needs coupled features (c12, l12, phi, lambda), got {}",
            features.len()
        )));
    };
    let system = cfg.pair_system(*lambda, *c12, *l12)?;
    let init = [cfg.initial(*phi), cfg.initial(*phi)];
    let trajectory = simulate(&init, &system, &cfg.integrator(true))?;
    Ok(CompareSide {
        features: features.to_vec(),
        form_factor: per_period_series(&trajectory, 0)?,
        concurrence: concurrence_series(&trajectory)?,
        trajectory,
    })
}

/// Simulates both coupled configurations for [`COMPARE_PERIODS`] periods with
/// density matrices recorded.
pub fn compare(opt: &[f64], sub: &[f64], cfg: &SimConfig) -> Result<CompareReport> {
    let cfg = SimConfig {
        periods: COMPARE_PERIODS,
        ..cfg.clone()
    };
    cfg.validate()?;
    let (optimal, suboptimal) = rayon::join(|| simulate_side(opt, &cfg), || simulate_side(sub, &cfg));
    Ok(CompareReport {
        optimal: optimal?,
        suboptimal: suboptimal?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parabola() -> FnSurrogate<impl Fn(&[f64]) -> f64 + Sync> {
        FnSurrogate(|x: &[f64]| -(x[0] - 0.3).powi(2))
    }

    #[test]
    fn finds_known_optimum() {
        let spec = SearchSpec::new(vec![(0.0, 1.0)], Objective::Maximize, 3);
        let r = optimize(&parabola(), &spec, |_| Ok(0.5)).unwrap();
        assert!((r.best_features[0] - 0.3).abs() < 1e-3, "{:?}", r.best_features);
        assert_eq!(r.simulated_value, Some(0.5));
    }

    #[test]
    fn minimize_goes_to_the_far_edge() {
        let spec = SearchSpec {
            verify: false,
            ..SearchSpec::new(vec![(0.0, 1.0)], Objective::Minimize, 3)
        };
        let r = optimize(&parabola(), &spec, |_| unreachable!()).unwrap();
        assert!((r.best_features[0] - 1.0).abs() < 1e-3);
        assert_eq!(r.simulated_value, None);
    }

    #[test]
    fn best_dominates_trace_and_is_deterministic() {
        let f = FnSurrogate(|x: &[f64]| ((x[0] * 7.0).sin() * (x[1] * 3.0).cos()).floor() + x[0] * 0.01);
        let spec = SearchSpec {
            n_random_starts: 64,
            refine_iters: 5,
            ..SearchSpec::new(vec![(0.0, 2.0), (-1.0, 1.0), (0.5, 0.5)], Objective::Maximize, 11)
        };
        let a = optimize_surrogate(&f, &spec).unwrap();
        let b = optimize_surrogate(&f, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.iter().all(|c| c.surrogate_value <= a.surrogate_value));
        assert!(a.trace.iter().all(|c| c.features[2] == 0.5));
        assert!(a.trace.len() > 64);
    }

    #[test]
    fn bounds_follow_the_dataset_ranges() {
        let s = SearchSpec::for_kind(DatasetKind::Coupled, Objective::Maximize, 0);
        assert_eq!(s.bounds.len(), 4);
        assert_eq!(s.bounds[0], (0.0, data::C12_MAX));
        assert_eq!(s.bounds[3], (LAMBDA_SEARCH_MIN, data::LAMBDA_MAX));
        assert!(s.validate().is_ok());
    }

    #[test]
    fn rejects_bad_bounds() {
        let spec = SearchSpec::new(vec![(1.0, 0.0)], Objective::Maximize, 0);
        assert!(optimize_surrogate(&parabola(), &spec).is_err());
    }

    fn quick_cfg() -> SimConfig {
        SimConfig {
            steps_per_period: 400,
            ..SimConfig::default()
        }
    }

    #[test]
    fn identical_configs_give_identical_series() {
        let x = [5e-13, 1.5e-8, 1.0, 2.0];
        let r = compare(&x, &x, &quick_cfg()).unwrap();
        assert_eq!(r.optimal.form_factor, r.suboptimal.form_factor);
        assert_eq!(r.optimal.concurrence.values, r.suboptimal.concurrence.values);
        assert_eq!(r.optimal.form_factor.metrics.len(), COMPARE_PERIODS);
        assert!(!r.form_factor_dominates());

        let dir = tempfile::tempdir().unwrap();
        r.write_bundle(dir.path()).unwrap();
        for f in ["optimal.csv", "suboptimal.csv", "formfactor_compare.csv", "concurrence_compare.csv", "summary.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let ff = std::fs::read_to_string(dir.path().join("formfactor_compare.csv")).unwrap();
        assert_eq!(ff.lines().count(), COMPARE_PERIODS + 1);
    }

    #[test]
    fn compare_needs_coupled_rows() {
        assert!(matches!(compare(&[1.0, 2.0], &[1.0, 2.0], &quick_cfg()), Err(MlError::Dimension(_))));
    }
}
