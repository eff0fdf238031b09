//! Circuit model of one or two superconducting quantum memristors.
//!
//! Energies are in joules and frequencies in rad/s. Hamiltonians are returned
//! divided by ħ, i.e. in rad/s, which is the unit the master equation is
//! integrated in.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dynamics::DensityMatrix;
use crate::error::{Error, Result};
use crate::numerics::{kron, ComplexMatrix};

type CMatrix = ComplexMatrix<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge (C).
    pub e: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Reduced flux quantum ħ/2e (Wb).
    pub phi_rq: f64,
}

impl PhysicalConstants {
    /// Exact SI values (2019 redefinition).
    pub fn si() -> Self {
        let e = 1.602_176_634e-19;
        let hbar = 1.054_571_817e-34;
        Self {
            e,
            hbar,
            phi_rq: hbar / (2.0 * e),
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::si()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemristorParams {
    /// Total capacitance C_Σ (F).
    pub c_sigma: f64,
    /// Self inductance L (H).
    pub l_self: f64,
    /// Spectral-density amplitude λ of the quasiparticle bath.
    pub lambda: f64,
}

/// Capacitive and/or inductive coupling between two memristors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Coupling capacitance C_c (F), zero for none.
    pub capacitance: f64,
    /// Coupling inductance L_c (H); `None` for no inductive coupling.
    pub inductance: Option<f64>,
}

impl Coupling {
    pub fn none() -> Self {
        Self::default()
    }

    /// Maps dataset features onto a coupling; a zero inductance means the
    /// inductive branch is absent.
    pub fn from_features(c12: f64, l12: f64) -> Self {
        Self {
            capacitance: c12,
            inductance: (l12 > 0.0).then_some(l12),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// One or two memristors.
    pub memristors: Vec<MemristorParams>,
    /// Ignored for a single memristor.
    pub coupling: Coupling,
}

impl CircuitParams {
    pub fn single(m: MemristorParams) -> Self {
        Self {
            memristors: vec![m],
            coupling: Coupling::none(),
        }
    }

    pub fn pair(m1: MemristorParams, m2: MemristorParams, coupling: Coupling) -> Self {
        Self {
            memristors: vec![m1, m2],
            coupling,
        }
    }

    pub fn n_memristors(&self) -> usize {
        self.memristors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.memristors.len();
        if !(1..=2).contains(&n) {
            return Err(Error::config(format!("1 or 2 memristors supported, got {n}")));
        }
        for (l, m) in self.memristors.iter().enumerate() {
            if !(m.c_sigma > 0.0 && m.c_sigma.is_finite()) {
                return Err(Error::config(format!("memristor {}: c_sigma must be > 0", l + 1)));
            }
            if !(m.l_self > 0.0 && m.l_self.is_finite()) {
                return Err(Error::config(format!("memristor {}: l_self must be > 0", l + 1)));
            }
            if !(m.lambda >= 0.0 && m.lambda.is_finite()) {
                return Err(Error::config(format!("memristor {}: lambda must be >= 0", l + 1)));
            }
        }
        if n == 2 {
            let c = self.coupling.capacitance;
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::config("coupling capacitance must be >= 0"));
            }
            if let Some(lc) = self.coupling.inductance {
                if !(lc > 0.0 && lc.is_finite()) {
                    return Err(Error::config("coupling inductance must be > 0 when present"));
                }
            }
        }
        Ok(())
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.memristors.iter().map(|m| m.lambda).collect()
    }
}

/// Quantities derived from the capacitance and inverse-inductance matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Charging energies E_C,ℓ (J).
    pub e_c: Vec<f64>,
    /// Inductive energies E_L,ℓ (J).
    pub e_l: Vec<f64>,
    /// ω_ℓ (rad/s).
    pub omega: Vec<f64>,
    /// Zero-point widths g_ℓ.
    pub g: Vec<f64>,
    pub e_c12: f64,
    pub e_l12: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Hopping strength √(ω₁ω₂)(α − β) (rad/s).
    pub coupling: f64,
}

impl DerivedParams {
    pub fn n_memristors(&self) -> usize {
        self.omega.len()
    }

    /// Drive period 2π/ω_ℓ (s).
    pub fn period(&self, l: usize) -> f64 {
        std::f64::consts::TAU / self.omega[l]
    }

    /// Builds parameters directly from ω and g (reduced units, tests).
    pub fn from_frequencies(omega: &[f64], g: &[f64], coupling: f64) -> Self {
        Self {
            e_c: vec![0.0; omega.len()],
            e_l: vec![0.0; omega.len()],
            omega: omega.to_vec(),
            g: g.to_vec(),
            e_c12: 0.0,
            e_l12: 0.0,
            alpha: 0.0,
            beta: 0.0,
            coupling,
        }
    }
}

/// Derives energies, frequencies and the coupling coefficient.
///
/// `E_C,jk = 2e²(C⁻¹)_jk` and `E_L,jk = φ_rq²(L⁻¹)_jk` where C is the
/// capacitance matrix and L⁻¹ the inverse-inductance matrix of the circuit.
pub fn derive(params: &CircuitParams, k: &PhysicalConstants) -> Result<DerivedParams> {
    params.validate()?;
    let ms = &params.memristors;
    let (cinv, linv) = if ms.len() == 1 {
        ([[1.0 / ms[0].c_sigma, 0.0], [0.0, 0.0]], [[1.0 / ms[0].l_self, 0.0], [0.0, 0.0]])
    } else {
        let cc = params.coupling.capacitance;
        let a = ms[0].c_sigma + cc;
        let b = ms[1].c_sigma + cc;
        let det = a * b - cc * cc;
        if !(det > 0.0) {
            return Err(Error::config("singular capacitance matrix"));
        }
        // Schur-complement form keeps the uncoupled limit exact.
        let cinv = [
            [1.0 / (a - cc * cc / b), cc / det],
            [cc / det, 1.0 / (b - cc * cc / a)],
        ];
        let il = params.coupling.inductance.map_or(0.0, |lc| 1.0 / lc);
        let linv = [
            [1.0 / ms[0].l_self + il, -il],
            [-il, 1.0 / ms[1].l_self + il],
        ];
        (cinv, linv)
    };

    let n = ms.len();
    let e2 = 2.0 * k.e * k.e;
    let phi2 = k.phi_rq * k.phi_rq;
    let e_c: Vec<f64> = (0..n).map(|l| e2 * cinv[l][l]).collect();
    let e_l: Vec<f64> = (0..n).map(|l| phi2 * linv[l][l]).collect();
    let omega: Vec<f64> = (0..n)
        .map(|l| (2.0 * e_c[l] * e_l[l]).sqrt() / k.hbar)
        .collect();
    let g: Vec<f64> = (0..n)
        .map(|l| (e_c[l] / (32.0 * e_l[l])).powf(0.25))
        .collect();

    let (e_c12, e_l12, alpha, beta, coupling) = if n == 2 {
        let e_c12 = e2 * cinv[0][1];
        let e_l12 = phi2 * linv[0][1];
        let alpha = e_l12 / (e_l[0] * e_l[1]).sqrt();
        let beta = e_c12 / (e_c[0] * e_c[1]).sqrt();
        let coupling = (omega[0] * omega[1]).sqrt() * (alpha - beta);
        (e_c12, e_l12, alpha, beta, coupling)
    } else {
        (0.0, 0.0, 0.0, 0.0, 0.0)
    };

    Ok(DerivedParams {
        e_c,
        e_l,
        omega,
        g,
        e_c12,
        e_l12,
        alpha,
        beta,
        coupling,
    })
}

/// External flux bias `φ_d(t) = phi_offset + amp·sin(ω t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub phi_offset: f64,
    pub amp: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            phi_offset: FRAC_PI_2,
            amp: FRAC_PI_2,
        }
    }
}

/// Bloch angles of `cos(θ/2)|0⟩ + e^{iη} sin(θ/2)|1⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialStateParams {
    pub theta: f64,
    pub eta: f64,
}

impl InitialStateParams {
    /// θ = π/2, the setting used for all datasets.
    pub fn equator(eta: f64) -> Self {
        Self {
            theta: FRAC_PI_2,
            eta,
        }
    }
}

/// Ladder, number, charge and phase operators on the full truncated space.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub trunc: usize,
    pub lowering: Vec<CMatrix>,
    pub raising: Vec<CMatrix>,
    /// a†a per mode.
    pub number: Vec<CMatrix>,
    /// Dimensionless charge n̂ = (i/4g)(a† − a).
    pub charge: Vec<CMatrix>,
    /// Dimensionless phase φ̂ = 2g(a† + a).
    pub phase: Vec<CMatrix>,
}

/// Truncated single-mode annihilation operator.
pub fn annihilation(trunc: usize) -> CMatrix {
    let mut a = CMatrix::zeros(trunc, trunc);
    for k in 1..trunc {
        a[(k - 1, k)] = Complex::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Embeds a single-mode operator at position `mode` of an `n`-mode product space.
pub fn embed(op: &CMatrix, mode: usize, n: usize) -> CMatrix {
    let id = CMatrix::identity(op.rows());
    let mut out = if mode == 0 { op.clone() } else { id.clone() };
    for k in 1..n {
        out = kron(&out, if k == mode { op } else { &id });
    }
    out
}

impl OperatorSet {
    pub fn new(g: &[f64], trunc: usize) -> Self {
        let n = g.len();
        let a1 = annihilation(trunc);
        let lowering: Vec<CMatrix> = (0..n).map(|l| embed(&a1, l, n)).collect();
        let raising: Vec<CMatrix> = lowering.iter().map(|a| a.adjoint()).collect();
        let number = lowering
            .iter()
            .zip(&raising)
            .map(|(a, ad)| ad * a)
            .collect();
        let charge = (0..n)
            .map(|l| (&raising[l] - &lowering[l]).scale(Complex::new(0.0, 1.0 / (4.0 * g[l]))))
            .collect();
        let phase = (0..n)
            .map(|l| (&raising[l] + &lowering[l]).scale_real(2.0 * g[l]))
            .collect();
        Self {
            trunc,
            lowering,
            raising,
            number,
            charge,
            phase,
        }
    }

    pub fn dim(&self) -> usize {
        self.lowering.first().map_or(1, |a| a.rows())
    }

    pub fn n_modes(&self) -> usize {
        self.lowering.len()
    }
}

/// `Ĥ/ħ = Σ ω_ℓ a†_ℓ a_ℓ − κ (a₁†a₂ + a₂†a₁)` with κ = `d.coupling`, in rad/s.
pub fn hamiltonian(d: &DerivedParams, trunc: usize) -> Result<CMatrix> {
    if trunc < 2 {
        return Err(Error::config(format!("truncation must be >= 2, got {trunc}")));
    }
    let ops = OperatorSet::new(&d.g, trunc);
    Ok(hamiltonian_from_ops(d, &ops))
}

pub(crate) fn hamiltonian_from_ops(d: &DerivedParams, ops: &OperatorSet) -> CMatrix {
    let dim = ops.dim();
    let mut h = CMatrix::zeros(dim, dim);
    for (l, num) in ops.number.iter().enumerate() {
        h = &h + &num.scale_real(d.omega[l]);
    }
    if ops.n_modes() == 2 && d.coupling != 0.0 {
        let hop = &(&ops.raising[0] * &ops.lowering[1]) + &(&ops.raising[1] * &ops.lowering[0]);
        h = &h - &hop.scale_real(d.coupling);
    }
    h
}

/// `Γ_ℓ(t) = λ_ℓ g_ℓ² ω_ℓ e^{−g_ℓ²} (1 + cos φ_dℓ(t))/2` (1/s).
pub fn decay_rate(t: f64, l: usize, d: &DerivedParams, drive: &DriveParams, lambda: f64) -> f64 {
    let w = d.omega[l];
    let g2 = d.g[l] * d.g[l];
    let flux = drive.phi_offset + drive.amp * (w * t).sin();
    lambda * g2 * w * (-g2).exp() * 0.5 * (1.0 + flux.cos())
}

/// Upper bound of [`decay_rate`] over time.
pub fn peak_decay_rate(l: usize, d: &DerivedParams, lambda: f64) -> f64 {
    let g2 = d.g[l] * d.g[l];
    lambda * g2 * d.omega[l] * (-g2).exp()
}

pub fn single_mode_state(p: &InitialStateParams, trunc: usize) -> Vec<Complex<f64>> {
    let mut psi = vec![Complex::new(0.0, 0.0); trunc];
    psi[0] = Complex::new((p.theta / 2.0).cos(), 0.0);
    psi[1] = Complex::from_polar((p.theta / 2.0).sin(), p.eta);
    psi
}

/// Product state `⊗_ℓ |Ψ_ℓ⟩⟨Ψ_ℓ|` on the truncated space.
pub fn initial_state(p: &[InitialStateParams], trunc: usize) -> Result<DensityMatrix<f64>> {
    if trunc < 2 {
        return Err(Error::config(format!("truncation must be >= 2, got {trunc}")));
    }
    if p.is_empty() {
        return Err(Error::config("no initial state given"));
    }
    let mut psi = vec![Complex::new(1.0, 0.0)];
    for s in p {
        let local = single_mode_state(s, trunc);
        psi = psi
            .iter()
            .flat_map(|&a| local.iter().map(move |&b| a * b))
            .collect();
    }
    let dim = psi.len();
    let rho = CMatrix::from_fn(dim, dim, |i, j| psi[i] * psi[j].conj());
    DensityMatrix::new(rho)
}

/// Everything the integrator needs about one physical configuration.
#[derive(Clone, Debug)]
pub struct MemristorSystem {
    pub circuit: CircuitParams,
    pub derived: DerivedParams,
    pub drive: Vec<DriveParams>,
    pub ops: OperatorSet,
    pub hamiltonian: CMatrix,
    pub constants: PhysicalConstants,
}

impl MemristorSystem {
    /// Uses the same drive for every memristor.
    pub fn new(circuit: CircuitParams, drive: DriveParams, trunc: usize) -> Result<Self> {
        let n = circuit.n_memristors();
        Self::with_drives(circuit, vec![drive; n], trunc)
    }

    pub fn with_drives(circuit: CircuitParams, drive: Vec<DriveParams>, trunc: usize) -> Result<Self> {
        if trunc < 2 {
            return Err(Error::config(format!("truncation must be >= 2, got {trunc}")));
        }
        let constants = PhysicalConstants::si();
        let derived = derive(&circuit, &constants)?;
        if drive.len() != circuit.n_memristors() {
            return Err(Error::config("one drive per memristor required"));
        }
        if drive.iter().any(|d| !(d.amp >= 0.0) || !d.phi_offset.is_finite()) {
            return Err(Error::config("drive amplitude must be >= 0"));
        }
        let ops = OperatorSet::new(&derived.g, trunc);
        let hamiltonian = hamiltonian_from_ops(&derived, &ops);
        Ok(Self {
            circuit,
            derived,
            drive,
            ops,
            hamiltonian,
            constants,
        })
    }

    pub fn n_memristors(&self) -> usize {
        self.derived.n_memristors()
    }

    pub fn trunc(&self) -> usize {
        self.ops.trunc
    }

    pub fn decay_rate(&self, l: usize, t: f64) -> f64 {
        decay_rate(t, l, &self.derived, &self.drive[l], self.circuit.memristors[l].lambda)
    }
}
