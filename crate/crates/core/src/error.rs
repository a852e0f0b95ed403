//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("axis must be a nonzero finite vector, got {0:?}")]
    InvalidAxis([f64; 3]),

    #[error("drift axis must be orthogonal to the magnetic axis (|n.M| = {0:.3e} > 1e-12)")]
    NonOrthogonalDrift(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} outside the configured horizon [0, {horizon}]")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("velocity magnitude {0:.3e} exceeded the safety bound {1:.3e}")]
    VelocityBlowup(f64, f64),

    #[error("quadrature node budget exceeded: {needed} nodes needed, {budget} allowed")]
    NodeBudgetExceeded { needed: u64, budget: u64 },

    #[error("grid or run configuration mismatch: {0}")]
    Mismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
