//! Two-memristor concurrence.

use std::io::Write;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DensityMatrix, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::{kron, pauli_y, singular_values, sqrtm_psd_floor, ComplexMatrix};
use crate::scalar::Real;

fn sigma_yy<T: Real>() -> ComplexMatrix<T> {
    let y = pauli_y::<T>();
    kron(&y, &y)
}

fn check_two_qubit<T: Real>(m: &ComplexMatrix<T>) -> Result<()> {
    if m.rows() != 4 || m.cols() != 4 {
        return Err(Error::Dimension(format!(
            "two-qubit state must be 4x4, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// `(σy⊗σy) ρ* (σy⊗σy)` with conjugation in the computational basis.
pub fn spin_flip<T: Real>(rho: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    check_two_qubit(rho)?;
    let yy = sigma_yy::<T>();
    Ok(&(&yy * &rho.conj()) * &yy)
}

/// Concurrence `max(0, ε₁ − ε₂ − ε₃ − ε₄)` of a two-qubit state.
///
/// The ε_i, the eigenvalues of `√(√ρ ρ̃ √ρ)`, are obtained as the singular
/// values of `√ρ (σy⊗σy) √ρ*`, which avoids squaring small values into
/// round-off. Eigenvalues of ρ below `64ε` are treated as zero.
pub fn concurrence<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    concurrence_of_matrix(rho.matrix())
}

pub fn concurrence_of_matrix<T: Real>(rho: &ComplexMatrix<T>) -> Result<T> {
    check_two_qubit(rho)?;
    let floor = T::epsilon() * T::lit(64.0);
    let s = sqrtm_psd_floor(rho, floor)?;
    let b = &(&s * &sigma_yy::<T>()) * &s.conj();
    let eps = singular_values(&b);
    let c = eps[0] - eps[1] - eps[2] - eps[3];
    Ok(c.max(T::zero()).min(T::one()))
}

/// Restricts a two-mode state on `trunc` levels per mode to the lowest two
/// levels of each mode and renormalizes.
pub fn project_two_level(rho: &ComplexMatrix<f64>, trunc: usize) -> Result<ComplexMatrix<f64>> {
    if rho.rows() != trunc * trunc || !rho.is_square() {
        return Err(Error::Dimension(format!(
            "state of dimension {} is not two modes of {trunc} levels",
            rho.rows()
        )));
    }
    let idx = [0, 1, trunc, trunc + 1];
    let sub = ComplexMatrix::from_fn(4, 4, |i, j| rho[(idx[i], idx[j])]);
    let tr = sub.trace().re;
    if !(tr > 0.0) {
        return Err(Error::config("state has no weight on the two-level subspace"));
    }
    Ok(sub.scale(Complex::new(1.0 / tr, 0.0)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ConcurrenceSeries {
    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `t,concurrence`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,concurrence")?;
        for (t, c) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:.16e},{c:.16e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

/// Concurrence at every recorded state of a two-memristor trajectory.
pub fn concurrence_series(traj: &Trajectory) -> Result<ConcurrenceSeries> {
    let samples = traj
        .rho_samples
        .as_ref()
        .ok_or_else(|| Error::config("trajectory was recorded without density matrices"))?;
    if traj.n_memristors() != 2 {
        return Err(Error::config("concurrence needs two memristors"));
    }
    let dim = samples.first().map_or(4, |r| r.dim());
    let trunc = (dim as f64).sqrt().round() as usize;
    if trunc > 2 {
        log::warn!("projecting {trunc}-level modes onto their two lowest levels for concurrence");
    }
    let values = samples
        .iter()
        .map(|r| {
            if trunc == 2 {
                concurrence(r)
            } else {
                concurrence_of_matrix(&project_two_level(r.matrix(), trunc)?)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConcurrenceSeries {
        times: traj.times.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, IntegratorConfig};
    use crate::model::{CircuitParams, Coupling, DriveParams, InitialStateParams, MemristorParams, MemristorSystem};
    use crate::numerics::eigh;
    use proptest::prelude::*;

    type M = ComplexMatrix<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn pure(psi: &[Complex<f64>]) -> M {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        M::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj() / (norm * norm))
    }

    fn bell() -> M {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        pure(&[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)])
    }

    fn density(m: M) -> DensityMatrix<f64> {
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn spin_flip_examples() {
        let mixed = M::identity(4).scale_real(0.25);
        assert!(spin_flip(&mixed).unwrap().max_abs_diff(&mixed) < 1e-15);
        assert!(spin_flip(&bell()).unwrap().max_abs_diff(&bell()) < 1e-15);
        let ground = M::diag_real(&[1.0, 0.0, 0.0, 0.0]);
        let top = M::diag_real(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(spin_flip(&ground).unwrap(), top);
        assert!(spin_flip(&M::identity(2)).is_err());
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&density(bell())).unwrap() - 1.0).abs() < 1e-10);
        let a = [c(0.6, 0.0), c(0.0, 0.8)];
        let b = [c(0.28, 0.96), c(0.0, 0.0)];
        let product: Vec<_> = (0..4).map(|k| a[k / 2] * b[k % 2]).collect();
        assert!(concurrence(&density(pure(&product))).unwrap() < 1e-10);
        let p = 0.5;
        let werner = &bell().scale_real(p) + &M::identity(4).scale_real((1.0 - p) / 4.0);
        assert!((concurrence(&density(werner)).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn werner_family_matches_closed_form() {
        for k in 0..=20 {
            let p = k as f64 / 20.0;
            let w = &bell().scale_real(p) + &M::identity(4).scale_real((1.0 - p) / 4.0);
            let expected = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert!((concurrence_of_matrix(&w).unwrap() - expected).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn projection_of_three_level_state() {
        let mut rho = M::zeros(9, 9);
        // Bell state on levels {0,1} of each mode plus weight on |22⟩
        for &(i, j, v) in &[(0, 0, 0.4), (0, 4, 0.4), (4, 0, 0.4), (4, 4, 0.4), (8, 8, 0.2)] {
            rho[(i, j)] = c(v, 0.0);
        }
        let p = project_two_level(&rho, 3).unwrap();
        assert!(p.max_abs_diff(&bell()) < 1e-15);
        assert!(project_two_level(&rho, 2).is_err());
    }

    fn mem() -> MemristorParams {
        MemristorParams {
            c_sigma: 1e-12,
            l_self: 1e-8,
            lambda: 5.0,
        }
    }

    fn run(coupling: Coupling, trunc: usize) -> ConcurrenceSeries {
        let system = MemristorSystem::new(CircuitParams::pair(mem(), mem(), coupling), DriveParams::default(), trunc)
            .unwrap();
        let init = [InitialStateParams::equator(0.3), InitialStateParams::equator(1.2)];
        let cfg = IntegratorConfig {
            steps_per_period: 200,
            periods: 2,
            record_rho: true,
        };
        concurrence_series(&simulate(&init, &system, &cfg).unwrap()).unwrap()
    }

    #[test]
    fn uncoupled_memristors_stay_separable() {
        let s = run(Coupling::none(), 2);
        assert!(s.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn coupling_creates_entanglement() {
        let s = run(Coupling { capacitance: 1e-12, inductance: None }, 2);
        assert!(s.values[0].abs() < 1e-10);
        assert!(s.peak() > 0.1);
        let s3 = run(Coupling { capacitance: 1e-12, inductance: None }, 3);
        assert!(s3.peak() > 0.1);
    }

    #[test]
    fn series_requires_samples() {
        let system = MemristorSystem::new(
            CircuitParams::pair(mem(), mem(), Coupling::none()),
            DriveParams::default(),
            2,
        )
        .unwrap();
        let init = [InitialStateParams::equator(0.0); 2];
        let cfg = IntegratorConfig {
            steps_per_period: 100,
            periods: 1,
            record_rho: false,
        };
        let traj = simulate(&init, &system, &cfg).unwrap();
        assert!(concurrence_series(&traj).is_err());
    }

    fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)
    }

    fn random_unitary(e: &[(f64, f64)]) -> M {
        let h = M::from_fn(2, 2, |i, j| {
            let (re, im) = e[i * 2 + j];
            c(re, im)
        })
        .hermitian_part();
        let eig = eigh(&h).unwrap();
        let v = &eig.eigenvectors;
        let phases = M::from_fn(2, 2, |i, j| {
            if i == j {
                Complex::from_polar(1.0, 3.0 * eig.eigenvalues[i])
            } else {
                c(0.0, 0.0)
            }
        });
        &(v * &phases) * &v.adjoint()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn pure_state_closed_form(amp in amplitudes()) {
            let psi: Vec<_> = amp.iter().map(|&(re, im)| c(re, im)).collect();
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let n: Vec<_> = psi.iter().map(|z| z / norm).collect();
            let expected = 2.0 * (n[0] * n[3] - n[1] * n[2]).norm();
            let got = concurrence_of_matrix(&pure(&psi)).unwrap();
            prop_assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
        }

        #[test]
        fn local_unitary_invariance(a in amplitudes(), b in amplitudes(), u1 in amplitudes(), u2 in amplitudes()) {
            let psi: Vec<_> = a.iter().map(|&(re, im)| c(re, im)).collect();
            let chi: Vec<_> = b.iter().map(|&(re, im)| c(re, im)).collect();
            prop_assume!(psi.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
            prop_assume!(chi.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3);
            let rho = &pure(&psi).scale_real(0.7) + &pure(&chi).scale_real(0.3);
            let u = kron(&random_unitary(&u1), &random_unitary(&u2));
            let rotated = &(&u * &rho) * &u.adjoint();
            let c0 = concurrence_of_matrix(&rho).unwrap();
            let c1 = concurrence_of_matrix(&rotated).unwrap();
            prop_assert!((c0 - c1).abs() < 1e-8);
            prop_assert!((0.0..=1.0).contains(&c0));
        }
    }
}
