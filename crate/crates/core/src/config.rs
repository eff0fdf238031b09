//! Simulation settings shared by the CLI and dataset generation.
//!
//! Stored as flat TOML, for example
//!
//! ```toml
//! c_sigma = 1e-12
//! l_self = 1e-8
//! phi_offset = 1.5707963267948966
//! amp = 1.5707963267948966
//! theta = 1.5707963267948966
//! trunc = 2
//! steps_per_period = 2000
//! periods = 10
//! ```
//!
//! Missing keys take the defaults; unknown keys are rejected.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::model::{CircuitParams, Coupling, DriveParams, InitialStateParams, MemristorParams, MemristorSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Total capacitance per memristor (F).
    pub c_sigma: f64,
    /// Self inductance per memristor (H).
    pub l_self: f64,
    /// Flux bias offset (rad).
    pub phi_offset: f64,
    /// Flux drive amplitude (rad).
    pub amp: f64,
    /// Initial polar angle.
    pub theta: f64,
    pub trunc: usize,
    pub steps_per_period: usize,
    pub periods: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let drive = DriveParams::default();
        let integ = IntegratorConfig::default();
        Self {
            c_sigma: 1e-12,
            l_self: 1e-8,
            phi_offset: drive.phi_offset,
            amp: drive.amp,
            theta: FRAC_PI_2,
            trunc: 2,
            steps_per_period: integ.steps_per_period,
            periods: integ.periods,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_sigma > 0.0) || !(self.l_self > 0.0) {
            return Err(Error::config("c_sigma and l_self must be > 0"));
        }
        if !(self.amp >= 0.0) || !self.phi_offset.is_finite() {
            return Err(Error::config("amp must be >= 0 and phi_offset finite"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::config("theta must lie in [0, pi]"));
        }
        if !(2..=4).contains(&self.trunc) {
            return Err(Error::config("trunc must be 2, 3 or 4"));
        }
        self.integrator(false).validate()
    }

    pub fn integrator(&self, record_rho: bool) -> IntegratorConfig {
        IntegratorConfig {
            steps_per_period: self.steps_per_period,
            periods: self.periods,
            record_rho,
        }
    }

    pub fn drive(&self) -> DriveParams {
        DriveParams {
            phi_offset: self.phi_offset,
            amp: self.amp,
        }
    }

    pub fn memristor(&self, lambda: f64) -> MemristorParams {
        MemristorParams {
            c_sigma: self.c_sigma,
            l_self: self.l_self,
            lambda,
        }
    }

    pub fn initial(&self, eta: f64) -> InitialStateParams {
        InitialStateParams { theta: self.theta, eta }
    }

    pub fn single_system(&self, lambda: f64) -> Result<MemristorSystem> {
        MemristorSystem::new(CircuitParams::single(self.memristor(lambda)), self.drive(), self.trunc)
    }

    /// Two identical memristors; `l12 <= 0` means no inductive coupling.
    pub fn pair_system(&self, lambda: f64, c12: f64, l12: f64) -> Result<MemristorSystem> {
        let m = self.memristor(lambda);
        MemristorSystem::new(
            CircuitParams::pair(m, m, Coupling::from_features(c12, l12)),
            self.drive(),
            self.trunc,
        )
    }
}
