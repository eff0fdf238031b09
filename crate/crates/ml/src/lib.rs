//! Surrogate models for quantum memristor form factors: regressors, a
//! leaderboard benchmark and surrogate-driven parameter search.

pub mod benchmark;
pub mod boost;
pub mod error;
pub mod forest;
pub mod gp;
pub mod knn;
pub mod metrics;
pub mod regressor;
pub mod scale;
pub mod search;
pub mod split;
pub mod tree;

pub use error::{MlError, Result};
pub use metrics::EvalMetrics;
pub use regressor::{Hyperparams, ModelKind, Regressor};
