//! Online estimation of agent unreliability from unlabelled binary verdicts,
//! with exact mean-field and Lyapunov tooling to check its convergence.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod lyapunov;
pub mod meanfield;
pub mod model;
mod numeric;

pub use error::{Error, Result};
pub use model::{UnreliabilityVector, VerdictVector};
