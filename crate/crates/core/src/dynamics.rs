//! Master-equation integration and memristive observables.
//!
//! The generator is
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_ℓ (Γ_ℓ(t)/2) (a_ℓ ρ a_ℓ† − ½{a_ℓ† a_ℓ, ρ})
//! ```
//!
//! with `H` in rad/s. Integration is classical fixed-step RK4 on a uniform
//! grid of `steps_per_period` points per drive period of memristor 1.

use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialStateParams, MemristorSystem};
use crate::numerics::{eigh, ComplexMatrix};
use crate::scalar::Real;

type CMatrix = ComplexMatrix<f64>;
type C64 = Complex<f64>;

/// Tolerance on the density-matrix invariants at construction.
pub const STATE_TOLERANCE: f64 = 1e-8;
/// Invariant violation during a run beyond which integration is abandoned.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-6;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct DensityMatrix<T: Real> {
    matrix: ComplexMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        let tol = T::lit(STATE_TOLERANCE).max(T::epsilon() * T::lit(64.0));
        if !matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::config("density matrix has non-finite entries"));
        }
        let herm = matrix.hermiticity_error();
        if herm > tol {
            return Err(Error::config(format!("density matrix not Hermitian ({herm})")));
        }
        let tr = matrix.trace();
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Err(Error::config(format!("density matrix trace {tr} != 1")));
        }
        let min = eigh(&matrix)?.min_eigenvalue();
        if min < -tol {
            return Err(Error::NotPsd(min.to_f64_lossy()));
        }
        Ok(Self { matrix })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// tr(ρ²).
    pub fn purity(&self) -> T {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn expectation(&self, op: &ComplexMatrix<T>) -> Complex<T> {
        self.matrix.trace_product(op)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(eigh(&self.matrix)?.min_eigenvalue())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub steps_per_period: usize,
    pub periods: usize,
    pub record_rho: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 2000,
            periods: 10,
            record_rho: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 100 {
            return Err(Error::config("steps_per_period must be >= 100"));
        }
        if self.periods < 1 {
            return Err(Error::config("periods must be >= 1"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_period * self.periods
    }
}

/// Sparse operator as a list of non-zero entries.
#[derive(Clone, Debug)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let z = m[(i, j)];
                if z != C64::zero() {
                    entries.push((i, j, z));
                }
            }
        }
        Self { entries }
    }

    /// Re tr(ρ · op).
    fn expectation_re(&self, rho: &[C64], dim: usize) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, z)| (rho[j * dim + i] * z).re)
            .sum()
    }
}

/// Time-dependent decay rates Γ_ℓ(t).
pub trait RateSchedule {
    fn rates(&self, t: f64, out: &mut [f64]);
}

impl<F: Fn(f64, &mut [f64])> RateSchedule for F {
    fn rates(&self, t: f64, out: &mut [f64]) {
        self(t, out)
    }
}

/// Driven rates of a [`MemristorSystem`].
pub struct DrivenRates<'a>(pub &'a MemristorSystem);

impl RateSchedule for DrivenRates<'_> {
    fn rates(&self, t: f64, out: &mut [f64]) {
        for (l, g) in out.iter_mut().enumerate() {
            *g = self.0.decay_rate(l, t);
        }
    }
}

/// Lindblad generator with one damping channel per mode.
#[derive(Clone, Debug)]
pub struct MasterEquation {
    dim: usize,
    hamiltonian: CMatrix,
    jumps: Vec<SparseOp>,
    jump_number: Vec<SparseOp>,
}

impl MasterEquation {
    pub fn new(hamiltonian: CMatrix, jumps: &[CMatrix]) -> Result<Self> {
        let dim = hamiltonian.rows();
        if !hamiltonian.is_square() || jumps.iter().any(|a| a.rows() != dim || a.cols() != dim) {
            return Err(Error::Dimension("generator operators must share one square shape".into()));
        }
        Ok(Self {
            dim,
            jumps: jumps.iter().map(SparseOp::from_dense).collect(),
            jump_number: jumps
                .iter()
                .map(|a| SparseOp::from_dense(&(&a.adjoint() * a)))
                .collect(),
            hamiltonian,
        })
    }

    pub fn for_system(system: &MemristorSystem) -> Result<Self> {
        Self::new(system.hamiltonian.clone(), &system.ops.lowering)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_channels(&self) -> usize {
        self.jumps.len()
    }

    /// Writes dρ/dt into `out`, using `k` as scratch for the effective
    /// non-Hermitian propagator `K = −iH − ¼ Σ Γ_ℓ a_ℓ†a_ℓ`, so that
    /// `dρ/dt = Kρ + (Kρ)† + Σ (Γ_ℓ/2) a_ℓ ρ a_ℓ†`.
    pub fn derivative(&self, rho: &[C64], rates: &[f64], k: &mut [C64], out: &mut [C64]) {
        let n = self.dim;
        let h = self.hamiltonian.as_slice();
        for (kk, hh) in k.iter_mut().zip(h) {
            *kk = C64::new(hh.im, -hh.re);
        }
        for (num, &gamma) in self.jump_number.iter().zip(rates) {
            for &(i, j, z) in &num.entries {
                k[i * n + j] -= z * (0.25 * gamma);
            }
        }
        // out = Kρ
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::zero();
                for m in 0..n {
                    acc += k[i * n + m] * rho[m * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        // out += (Kρ)†, done on the upper triangle to stay in place
        for i in 0..n {
            let d = out[i * n + i];
            out[i * n + i] = C64::new(2.0 * d.re, 0.0);
            for j in (i + 1)..n {
                let a = out[i * n + j];
                let b = out[j * n + i];
                out[i * n + j] = a + b.conj();
                out[j * n + i] = b + a.conj();
            }
        }
        for (jump, &gamma) in self.jumps.iter().zip(rates) {
            if gamma == 0.0 {
                continue;
            }
            let w = 0.5 * gamma;
            for &(i, j, a) in &jump.entries {
                for &(k2, l, b) in &jump.entries {
                    out[i * n + k2] += a * rho[j * n + l] * b.conj() * w;
                }
            }
        }
    }
}

/// Drift diagnostics collected before each per-step correction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    /// Largest |tr ρ − 1| after an RK4 step, before renormalization.
    pub max_trace_drift: f64,
    /// Largest max|ρ − ρ†| after an RK4 step, before re-Hermitization.
    pub max_hermiticity_drift: f64,
    /// Smallest eigenvalue found at the period-boundary checks.
    pub min_eigenvalue: f64,
}

struct Rk4Workspace {
    k: Vec<C64>,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
    rates: Vec<f64>,
}

impl Rk4Workspace {
    fn new(dim: usize, channels: usize) -> Self {
        let z = vec![C64::zero(); dim * dim];
        Self {
            k: z.clone(),
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
            rates: vec![0.0; channels],
        }
    }
}

/// Fixed-step RK4 integrator for a [`MasterEquation`].
pub struct Integrator<'a, R: RateSchedule> {
    eq: &'a MasterEquation,
    schedule: R,
    ws: Rk4Workspace,
}

impl<'a, R: RateSchedule> Integrator<'a, R> {
    pub fn new(eq: &'a MasterEquation, schedule: R) -> Self {
        Self {
            ws: Rk4Workspace::new(eq.dim, eq.n_channels()),
            eq,
            schedule,
        }
    }

    /// Advances `rho` in place by one step from `t`.
    pub fn step(&mut self, t: f64, dt: f64, rho: &mut [C64]) {
        let ws = &mut self.ws;
        let eq = self.eq;

        self.schedule.rates(t, &mut ws.rates);
        eq.derivative(rho, &ws.rates, &mut ws.k, &mut ws.k1);

        self.schedule.rates(t + 0.5 * dt, &mut ws.rates);
        for ((x, r), d) in ws.tmp.iter_mut().zip(rho.iter()).zip(&ws.k1) {
            *x = r + d * (0.5 * dt);
        }
        eq.derivative(&ws.tmp, &ws.rates, &mut ws.k, &mut ws.k2);
        for ((x, r), d) in ws.tmp.iter_mut().zip(rho.iter()).zip(&ws.k2) {
            *x = r + d * (0.5 * dt);
        }
        eq.derivative(&ws.tmp, &ws.rates, &mut ws.k, &mut ws.k3);

        self.schedule.rates(t + dt, &mut ws.rates);
        for ((x, r), d) in ws.tmp.iter_mut().zip(rho.iter()).zip(&ws.k3) {
            *x = r + d * dt;
        }
        eq.derivative(&ws.tmp, &ws.rates, &mut ws.k, &mut ws.k4);

        let w = dt / 6.0;
        for (i, r) in rho.iter_mut().enumerate() {
            *r += (ws.k1[i] + (ws.k2[i] + ws.k3[i]) * 2.0 + ws.k4[i]) * w;
        }
    }
}

/// Re-Hermitizes and renormalizes in place; returns (trace drift, hermiticity drift).
fn correct(rho: &mut [C64], n: usize) -> (f64, f64) {
    let mut herm = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = rho[i * n + j];
            let b = rho[j * n + i];
            herm = herm.max((a - b.conj()).norm());
            let avg = (a + b.conj()) * 0.5;
            rho[i * n + j] = avg;
            rho[j * n + i] = avg.conj();
        }
        herm = herm.max(2.0 * rho[i * n + i].im.abs());
        rho[i * n + i].im = 0.0;
    }
    let tr: f64 = (0..n).map(|i| rho[i * n + i].re).sum();
    for z in rho.iter_mut() {
        *z /= tr;
    }
    ((tr - 1.0).abs(), herm)
}

/// Time series of one memristor's observables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemristorSeries {
    /// ⟨n̂_ℓ⟩, dimensionless charge.
    pub n_exp: Vec<f64>,
    /// V_cap,ℓ (V).
    pub v_cap: Vec<f64>,
    /// I_QP,ℓ (A).
    pub i_qp: Vec<f64>,
    /// Γ_ℓ (1/s).
    pub gamma: Vec<f64>,
    /// G_ℓ (S).
    pub memductance: Vec<f64>,
}

impl MemristorSeries {
    fn with_capacity(n: usize) -> Self {
        Self {
            n_exp: Vec::with_capacity(n),
            v_cap: Vec::with_capacity(n),
            i_qp: Vec::with_capacity(n),
            gamma: Vec::with_capacity(n),
            memductance: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, n_exp: f64, gamma: f64, c_sigma: f64, e: f64) {
        let v = -2.0 * e * n_exp / c_sigma;
        let g = c_sigma * gamma / 2.0;
        self.n_exp.push(n_exp);
        self.v_cap.push(v);
        self.gamma.push(gamma);
        self.memductance.push(g);
        self.i_qp.push(g * v);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Sample times (s), `periods · steps_per_period + 1` of them.
    pub times: Vec<f64>,
    /// Drive period of memristor 1 (s).
    pub period: f64,
    pub steps_per_period: usize,
    pub periods: usize,
    pub series: Vec<MemristorSeries>,
    pub rho_samples: Option<Vec<DensityMatrix<f64>>>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_memristors(&self) -> usize {
        self.series.len()
    }

    /// CSV with header `t,n1,v1,i1,gamma1[,n2,v2,i2,gamma2]`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("t");
        for l in 1..=self.series.len() {
            header.push_str(&format!(",n{l},v{l},i{l},gamma{l}"));
        }
        writeln!(w, "{header}")?;
        for (k, t) in self.times.iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for s in &self.series {
                write!(
                    w,
                    ",{:.16e},{:.16e},{:.16e},{:.16e}",
                    s.n_exp[k], s.v_cap[k], s.i_qp[k], s.gamma[k]
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn check_state(rho0: &DensityMatrix<f64>, system: &MemristorSystem) -> Result<()> {
    if rho0.dim() != system.ops.dim() {
        return Err(Error::Dimension(format!(
            "initial state has dimension {}, model needs {}",
            rho0.dim(),
            system.ops.dim()
        )));
    }
    Ok(())
}

/// Integrates the master equation of `system` from `rho0`.
pub fn evolve(
    rho0: &DensityMatrix<f64>,
    system: &MemristorSystem,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_state(rho0, system)?;
    let eq = MasterEquation::for_system(system)?;
    let mut integrator = Integrator::new(&eq, DrivenRates(system));

    let n = eq.dim();
    let n_mem = system.n_memristors();
    let period = system.derived.period(0);
    let dt = period / cfg.steps_per_period as f64;
    let total = cfg.total_steps();
    let charge: Vec<SparseOp> = system.ops.charge.iter().map(SparseOp::from_dense).collect();
    let e = system.constants.e;

    let mut rho: Vec<C64> = rho0.matrix().as_slice().to_vec();
    let mut times = Vec::with_capacity(total + 1);
    let mut series: Vec<MemristorSeries> =
        (0..n_mem).map(|_| MemristorSeries::with_capacity(total + 1)).collect();
    let mut samples = cfg.record_rho.then(|| Vec::with_capacity(total + 1));
    let mut stats = IntegrationStats {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };

    let mut record = |k: usize, rho: &[C64], series: &mut Vec<MemristorSeries>| {
        let t = k as f64 * dt;
        times.push(t);
        for (l, s) in series.iter_mut().enumerate() {
            let c_sigma = system.circuit.memristors[l].c_sigma;
            s.push(charge[l].expectation_re(rho, n), system.decay_rate(l, t), c_sigma, e);
        }
        if let Some(samples) = samples.as_mut() {
            let m = CMatrix::from_vec(n, n, rho.to_vec()).expect("square state");
            samples.push(DensityMatrix::new_unchecked(m));
        }
    };

    record(0, &rho, &mut series);
    for k in 0..total {
        let t = k as f64 * dt;
        integrator.step(t, dt, &mut rho);
        let (trace_drift, herm_drift) = correct(&mut rho, n);
        stats.max_trace_drift = stats.max_trace_drift.max(trace_drift);
        stats.max_hermiticity_drift = stats.max_hermiticity_drift.max(herm_drift);
        let t_next = (k + 1) as f64 * dt;
        if !(trace_drift <= DIVERGENCE_TOLERANCE) || !(herm_drift <= DIVERGENCE_TOLERANCE) {
            return Err(Error::Diverged {
                time: t_next,
                reason: format!("trace drift {trace_drift:e}, hermiticity drift {herm_drift:e}"),
            });
        }
        if (0..n).any(|i| rho[i * n + i].re < -DIVERGENCE_TOLERANCE) {
            return Err(Error::Diverged {
                time: t_next,
                reason: "negative population".into(),
            });
        }
        if (k + 1) % cfg.steps_per_period == 0 {
            let m = CMatrix::from_vec(n, n, rho.clone())?;
            let min = eigh(&m)?.min_eigenvalue();
            stats.min_eigenvalue = stats.min_eigenvalue.min(min);
            if min < -DIVERGENCE_TOLERANCE {
                return Err(Error::Diverged {
                    time: t_next,
                    reason: format!("eigenvalue {min:e}"),
                });
            }
        }
        record(k + 1, &rho, &mut series);
    }

    Ok(Trajectory {
        times,
        period,
        steps_per_period: cfg.steps_per_period,
        periods: cfg.periods,
        series,
        rho_samples: samples,
        stats,
    })
}

/// Builds the product initial state and runs [`evolve`].
pub fn simulate(
    init: &[InitialStateParams],
    system: &MemristorSystem,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let rho0 = crate::model::initial_state(init, system.trunc())?;
    evolve(&rho0, system, cfg)
}

/// Which closed linear system [`evolve_mean`] integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanRoute {
    /// The (⟨n̂_ℓ⟩, ⟨φ̂_ℓ⟩) equations of motion. Exact when the modes are
    /// uncoupled, or when no populated level reaches the truncation edge.
    ChargePhase,
    /// Expectation values of a complete Hermitian operator basis, needed for
    /// coupled two-level modes where the charge/phase pair does not close.
    OperatorBasis,
}

impl MeanRoute {
    pub fn for_system(system: &MemristorSystem) -> Self {
        if system.n_memristors() == 1 || system.derived.coupling == 0.0 || system.trunc() >= 3 {
            MeanRoute::ChargePhase
        } else {
            MeanRoute::OperatorBasis
        }
    }
}

/// Independent route to the same observables as [`evolve`]: integrates the
/// Heisenberg-picture equations for expectation values with the same RK4 grid.
pub fn evolve_mean(
    init: &[InitialStateParams],
    system: &MemristorSystem,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    evolve_mean_with(init, system, cfg, MeanRoute::for_system(system))
}

pub fn evolve_mean_with(
    init: &[InitialStateParams],
    system: &MemristorSystem,
    cfg: &IntegratorConfig,
    route: MeanRoute,
) -> Result<Trajectory> {
    cfg.validate()?;
    if init.len() != system.n_memristors() {
        return Err(Error::config("one initial state per memristor required"));
    }
    let n_mem = system.n_memristors();
    let period = system.derived.period(0);
    let dt = period / cfg.steps_per_period as f64;
    let total = cfg.total_steps();

    let (mut state, generator, readout): (Vec<f64>, Box<dyn Fn(f64, &[f64], &mut [f64])>, Vec<Vec<f64>>) =
        match route {
            MeanRoute::ChargePhase => charge_phase_system(init, system),
            MeanRoute::OperatorBasis => operator_basis_system(init, system)?,
        };

    let mut times = Vec::with_capacity(total + 1);
    let mut series: Vec<MemristorSeries> =
        (0..n_mem).map(|_| MemristorSeries::with_capacity(total + 1)).collect();
    let e = system.constants.e;
    let mut record = |k: usize, x: &[f64], series: &mut Vec<MemristorSeries>| {
        let t = k as f64 * dt;
        times.push(t);
        for (l, s) in series.iter_mut().enumerate() {
            let n_exp: f64 = readout[l].iter().zip(x).map(|(c, v)| c * v).sum();
            s.push(n_exp, system.decay_rate(l, t), system.circuit.memristors[l].c_sigma, e);
        }
    };

    record(0, &state, &mut series);
    let dim = state.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    for k in 0..total {
        let t = k as f64 * dt;
        generator(t, &state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        generator(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        generator(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + dt * k3[i];
        }
        generator(t + dt, &tmp, &mut k4);
        for i in 0..dim {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                time: (k + 1) as f64 * dt,
                reason: "non-finite mean values".into(),
            });
        }
        record(k + 1, &state, &mut series);
    }

    Ok(Trajectory {
        times,
        period,
        steps_per_period: cfg.steps_per_period,
        periods: cfg.periods,
        series,
        rho_samples: None,
        stats: IntegrationStats::default(),
    })
}

type MeanSystem<'a> = (Vec<f64>, Box<dyn Fn(f64, &[f64], &mut [f64]) + 'a>, Vec<Vec<f64>>);

/// State `(⟨n̂₁⟩, ⟨φ̂₁⟩, ⟨n̂₂⟩, ⟨φ̂₂⟩)`. With κ the hopping strength:
///
/// ```text
/// d⟨n̂_ℓ⟩/dt = −(ω_ℓ/8g_ℓ²)⟨φ̂_ℓ⟩ + (κ/8g_ℓg_m)⟨φ̂_m⟩ − (Γ_ℓ/4)⟨n̂_ℓ⟩
/// d⟨φ̂_ℓ⟩/dt =  8g_ℓ²ω_ℓ⟨n̂_ℓ⟩  − 8g_ℓg_m κ⟨n̂_m⟩   − (Γ_ℓ/4)⟨φ̂_ℓ⟩
/// ```
///
/// For circuit-derived parameters `ω/8g² = E_L/ħ` and `8g²ω = 2E_C/ħ`.
fn charge_phase_system<'a>(init: &[InitialStateParams], system: &'a MemristorSystem) -> MeanSystem<'a> {
    let d = &system.derived;
    let n_mem = system.n_memristors();
    let mut state = Vec::with_capacity(2 * n_mem);
    for (l, p) in init.iter().enumerate() {
        // ⟨a⟩ = cos(θ/2) sin(θ/2) e^{iη}
        let amp = (p.theta / 2.0).cos() * (p.theta / 2.0).sin();
        let (re, im) = (amp * p.eta.cos(), amp * p.eta.sin());
        let g = d.g[l];
        state.push(im / (2.0 * g));
        state.push(4.0 * g * re);
    }
    let generator = move |t: f64, x: &[f64], out: &mut [f64]| {
        for l in 0..n_mem {
            let (g, w) = (d.g[l], d.omega[l]);
            let damp = system.decay_rate(l, t) / 4.0;
            let (n_l, phi_l) = (x[2 * l], x[2 * l + 1]);
            let mut dn = -w / (8.0 * g * g) * phi_l - damp * n_l;
            let mut dphi = 8.0 * g * g * w * n_l - damp * phi_l;
            if n_mem == 2 {
                let m = 1 - l;
                let gm = d.g[m];
                dn += d.coupling / (8.0 * g * gm) * x[2 * m + 1];
                dphi -= 8.0 * g * gm * d.coupling * x[2 * m];
            }
            out[2 * l] = dn;
            out[2 * l + 1] = dphi;
        }
    };
    let readout = (0..n_mem)
        .map(|l| {
            let mut r = vec![0.0; 2 * n_mem];
            r[2 * l] = 1.0;
            r
        })
        .collect();
    (state, Box::new(generator), readout)
}

/// Orthogonal Hermitian basis of D×D matrices: diagonal units, then
/// `E_jk + E_kj` and `−iE_jk + iE_kj` for j < k.
fn hermitian_basis(dim: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        let mut m = CMatrix::zeros(dim, dim);
        m[(j, j)] = C64::new(1.0, 0.0);
        basis.push(m);
    }
    for j in 0..dim {
        for k in (j + 1)..dim {
            let mut x = CMatrix::zeros(dim, dim);
            x[(j, k)] = C64::new(1.0, 0.0);
            x[(k, j)] = C64::new(1.0, 0.0);
            basis.push(x);
            let mut y = CMatrix::zeros(dim, dim);
            y[(j, k)] = C64::new(0.0, -1.0);
            y[(k, j)] = C64::new(0.0, 1.0);
            basis.push(y);
        }
    }
    basis
}

/// Real coefficients of `L†(B_i)` in the basis, row i: `c_ij = tr(B_j L†(B_i)) / tr(B_j²)`.
fn adjoint_matrix(basis: &[CMatrix], adjoint: impl Fn(&CMatrix) -> CMatrix) -> Vec<f64> {
    let m = basis.len();
    let norms: Vec<f64> = basis.iter().map(|b| b.trace_product(b).re).collect();
    let mut out = vec![0.0; m * m];
    for (i, bi) in basis.iter().enumerate() {
        let image = adjoint(bi);
        for (j, bj) in basis.iter().enumerate() {
            out[i * m + j] = bj.trace_product(&image).re / norms[j];
        }
    }
    out
}

/// State: expectation values `⟨B_j⟩` of every basis operator.
fn operator_basis_system<'a>(
    init: &[InitialStateParams],
    system: &'a MemristorSystem,
) -> Result<MeanSystem<'a>> {
    let dim = system.ops.dim();
    let basis = hermitian_basis(dim);
    let m = basis.len();
    let i = C64::new(0.0, 1.0);
    let h = &system.hamiltonian;
    // Heisenberg picture: L†(X) = i[H, X] + Σ (Γ/2)(a†Xa − ½{a†a, X})
    let unitary = adjoint_matrix(&basis, |x| (&(h * x) - &(x * h)).scale(i));
    let dissipators: Vec<Vec<f64>> = (0..system.n_memristors())
        .map(|l| {
            let a = &system.ops.lowering[l];
            let ad = &system.ops.raising[l];
            let num = ad * a;
            adjoint_matrix(&basis, |x| {
                let sandwich = &(ad * x) * a;
                let anti = &(&num * x) + &(x * &num);
                &sandwich - &anti.scale_real(0.5)
            })
        })
        .collect();

    let rho0 = crate::model::initial_state(init, system.trunc())?;
    let state: Vec<f64> = basis.iter().map(|b| rho0.expectation(b).re).collect();
    let norms: Vec<f64> = basis.iter().map(|b| b.trace_product(b).re).collect();
    let readout = system
        .ops
        .charge
        .iter()
        .map(|q| {
            basis
                .iter()
                .zip(&norms)
                .map(|(b, nb)| b.trace_product(q).re / nb)
                .collect()
        })
        .collect();

    let n_mem = system.n_memristors();
    let generator = move |t: f64, x: &[f64], out: &mut [f64]| {
        let rates: Vec<f64> = (0..n_mem).map(|l| system.decay_rate(l, t) / 2.0).collect();
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                let mut coeff = unitary[r * m + c];
                for (d, w) in dissipators.iter().zip(&rates) {
                    coeff += w * d[r * m + c];
                }
                acc += coeff * x[c];
            }
            out[r] = acc;
        }
    };
    Ok((state, Box::new(generator), readout))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps_per_period: usize,
    /// max_t |⟨n̂⟩_coarse − ⟨n̂⟩_fine| / max_t |⟨n̂⟩_fine| over all memristors.
    pub max_relative_deviation: f64,
    pub passed: bool,
}

pub const CONVERGENCE_TOLERANCE: f64 = 1e-5;

/// Compares a run at `steps_per_period` against one at twice the resolution.
pub fn convergence_check(
    init: &[InitialStateParams],
    system: &MemristorSystem,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceReport> {
    let coarse_cfg = IntegratorConfig {
        record_rho: false,
        ..*cfg
    };
    let fine_cfg = IntegratorConfig {
        steps_per_period: 2 * cfg.steps_per_period,
        ..coarse_cfg
    };
    let coarse = simulate(init, system, &coarse_cfg)?;
    let fine = simulate(init, system, &fine_cfg)?;
    let mut worst = 0.0f64;
    for (c, f) in coarse.series.iter().zip(&fine.series) {
        let scale = f.n_exp.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let dev = c
            .n_exp
            .iter()
            .enumerate()
            .map(|(k, x)| (x - f.n_exp[2 * k]).abs())
            .fold(0.0f64, f64::max);
        let rel = if scale > 0.0 { dev / scale } else { dev };
        worst = worst.max(rel);
    }
    Ok(ConvergenceReport {
        steps_per_period: cfg.steps_per_period,
        max_relative_deviation: worst,
        passed: worst < CONVERGENCE_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{annihilation, CircuitParams, Coupling, DriveParams, MemristorParams};

    fn mem(lambda: f64) -> MemristorParams {
        MemristorParams {
            c_sigma: 1e-12,
            l_self: 1e-8,
            lambda,
        }
    }

    fn short() -> IntegratorConfig {
        IntegratorConfig {
            steps_per_period: 400,
            periods: 3,
            record_rho: true,
        }
    }

    #[test]
    fn density_matrix_rejects_bad_input() {
        let m = CMatrix::diag_real(&[0.7, 0.7]);
        assert!(DensityMatrix::new(m).is_err());
        let m = CMatrix::diag_real(&[1.5, -0.5]);
        assert!(DensityMatrix::new(m).is_err());
        let mut m = CMatrix::diag_real(&[0.5, 0.5]);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = IntegratorConfig::default();
        assert!(c.validate().is_ok());
        c.steps_per_period = 99;
        assert!(c.validate().is_err());
        c.steps_per_period = 100;
        c.periods = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unitary_evolution_preserves_purity() {
        let system = MemristorSystem::new(CircuitParams::single(mem(0.0)), DriveParams::default(), 2).unwrap();
        let init = [InitialStateParams::equator(0.7)];
        let traj = simulate(&init, &system, &IntegratorConfig { periods: 10, ..short() }).unwrap();
        let rhos = traj.rho_samples.as_ref().unwrap();
        for r in rhos {
            assert!((r.purity() - 1.0).abs() < 1e-8);
        }
        // λ = 0: no current, the I/V "loop" collapses onto the voltage axis
        assert!(traj.series[0].i_qp.iter().all(|&i| i == 0.0));
        assert!(traj.series[0].v_cap.iter().any(|&v| v.abs() > 0.0));
    }

    #[test]
    fn analytic_damping_of_excited_state() {
        // H = 0, Γ = 0.2: ⟨a†a⟩(t) = exp(−Γ t / 2)
        let a = annihilation(2);
        let eq = MasterEquation::new(CMatrix::zeros(2, 2), std::slice::from_ref(&a)).unwrap();
        let mut it = Integrator::new(&eq, |_t: f64, r: &mut [f64]| r[0] = 0.2);
        let mut rho = CMatrix::diag_real(&[0.0, 1.0]).as_slice().to_vec();
        let dt = 1e-3;
        for k in 0..10_000 {
            it.step(k as f64 * dt, dt, &mut rho);
        }
        let pop = rho[3].re;
        assert!((pop - (-1.0f64).exp()).abs() < 1e-9, "{pop}");
    }

    #[test]
    fn trajectory_shapes_and_ohm_law() {
        let system = MemristorSystem::new(
            CircuitParams::pair(mem(3.0), mem(3.0), Coupling { capacitance: 5e-13, inductance: None }),
            DriveParams::default(),
            2,
        )
        .unwrap();
        let init = [InitialStateParams::equator(1.0), InitialStateParams::equator(1.0)];
        let traj = simulate(&init, &system, &short()).unwrap();
        assert_eq!(traj.len(), 3 * 400 + 1);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        for s in &traj.series {
            assert_eq!(s.n_exp.len(), traj.len());
            for k in 0..traj.len() {
                assert_eq!(s.i_qp[k], s.memductance[k] * s.v_cap[k]);
            }
        }
        let bound = 1.0 / (4.0 * system.derived.g[0]);
        assert!(traj.series[0].n_exp.iter().all(|n| n.abs() <= bound + 1e-12));
        assert!(traj.stats.max_trace_drift < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let system = MemristorSystem::new(CircuitParams::single(mem(1.0)), DriveParams::default(), 3).unwrap();
        let rho = crate::model::initial_state(&[InitialStateParams::equator(0.0)], 2).unwrap();
        assert!(matches!(evolve(&rho, &system, &short()), Err(Error::Dimension(_))));
    }

    #[test]
    fn mean_oracle_matches_for_both_routes() {
        for (coupling, trunc) in [
            (Coupling::none(), 2),
            (Coupling { capacitance: 1e-12, inductance: Some(1.5e-8) }, 2),
            (Coupling { capacitance: 7e-13, inductance: None }, 3),
        ] {
            let system = MemristorSystem::new(
                CircuitParams::pair(mem(20.0), mem(20.0), coupling),
                DriveParams::default(),
                trunc,
            )
            .unwrap();
            let init = [InitialStateParams::equator(0.4), InitialStateParams { theta: 1.1, eta: 2.0 }];
            let cfg = IntegratorConfig { record_rho: false, ..short() };
            let a = simulate(&init, &system, &cfg).unwrap();
            let b = evolve_mean(&init, &system, &cfg).unwrap();
            for (sa, sb) in a.series.iter().zip(&b.series) {
                let dev = sa
                    .n_exp
                    .iter()
                    .zip(&sb.n_exp)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                assert!(dev < 1e-9, "{coupling:?} trunc {trunc}: {dev}");
            }
        }
    }

    #[test]
    fn charge_phase_route_fails_for_coupled_qubits() {
        // Documents why the operator-basis route exists.
        let system = MemristorSystem::new(
            CircuitParams::pair(mem(1.0), mem(1.0), Coupling { capacitance: 1e-12, inductance: None }),
            DriveParams::default(),
            2,
        )
        .unwrap();
        let init = [InitialStateParams::equator(0.4), InitialStateParams::equator(0.4)];
        let cfg = IntegratorConfig { record_rho: false, ..short() };
        let a = simulate(&init, &system, &cfg).unwrap();
        let b = evolve_mean_with(&init, &system, &cfg, MeanRoute::ChargePhase).unwrap();
        let dev = a.series[0]
            .n_exp
            .iter()
            .zip(&b.series[0].n_exp)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(dev > 1e-3);
    }

    #[test]
    fn mean_oracle_undriven_ellipse_is_periodic() {
        let system = MemristorSystem::new(CircuitParams::single(mem(0.0)), DriveParams::default(), 2).unwrap();
        let init = [InitialStateParams::equator(0.9)];
        let cfg = IntegratorConfig { steps_per_period: 2000, periods: 1, record_rho: false };
        let traj = evolve_mean(&init, &system, &cfg).unwrap();
        let n = &traj.series[0].n_exp;
        assert!((n[0] - n[n.len() - 1]).abs() < 1e-6);
    }

    #[test]
    fn convergence_of_default_resolution() {
        let system = MemristorSystem::new(CircuitParams::single(mem(0.0)), DriveParams::default(), 2).unwrap();
        let init = [InitialStateParams::equator(1.5)];
        let cfg = IntegratorConfig { steps_per_period: 2000, periods: 2, record_rho: false };
        let report = convergence_check(&init, &system, &cfg).unwrap();
        assert!(report.passed);
        assert!(report.max_relative_deviation < 1e-9);
    }

    #[test]
    fn csv_header_and_row_count() {
        let system = MemristorSystem::new(CircuitParams::single(mem(1.0)), DriveParams::default(), 2).unwrap();
        let traj = simulate(&[InitialStateParams::equator(1.0)], &system, &short()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,n1,v1,i1,gamma1"));
        assert_eq!(lines.count(), traj.len());
    }
}
