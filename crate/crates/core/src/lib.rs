//! Simulation core for superconducting quantum memristors: circuit model,
//! master-equation dynamics, hysteresis-loop geometry, concurrence and
//! dataset generation.

pub mod config;
pub mod data;
pub mod dynamics;
pub mod entanglement;
pub mod loops;
pub mod error;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CMatrix = numerics::ComplexMatrix<f64>;
pub type CMatrix32 = numerics::ComplexMatrix<f32>;
pub type Density = dynamics::DensityMatrix<f64>;
pub type Density32 = dynamics::DensityMatrix<f32>;
