//! Kinetic plasma homogenization lab.
//!
//! Solves the linear Vlasov equation with a strong external magnetic field
//! (and optionally a strong orthogonal electric field) at finite scale
//! separation epsilon, solves the corresponding gyroaveraged limit equations,
//! and provides quadrature diagnostics that measure weak-* and two-scale
//! convergence of the finite-epsilon solutions toward their limits. A
//! particle-in-cell Vlasov-Poisson pair (subcycled finite-epsilon run vs.
//! orbit-averaged limit run) covers the self-consistent case.
//!
//! Everything is deterministic: a configuration plus a seed reproduces
//! results bit for bit, independently of the number of worker threads.

pub mod characteristics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod gyroaverage;
pub mod linear_solver;
pub mod poisson;
pub mod profiles;
pub mod quadrature;
pub mod sampling;
pub mod twoscale;
pub mod vp;

pub use characteristics::{
    fast_flow, fast_flow_drift, push_full, push_limit, push_limit_drift, IntegratorSettings,
    PhasePoint, Scheme,
};
pub use error::Error;
pub use fields::{FieldConfig, FieldSample, FieldSpec};
pub use geometry::{alignment_rotation, parallel_part, rotate_about_axis, Mat3, UnitAxis, Vec3};
pub use gyroaverage::{
    drift_rotation, gyroaverage, limit_initial_data, reconstruct_profile, GyroQuadrature,
    VelocityFunction,
};
pub use linear_solver::{LinearProblem, Variant};
pub use poisson::{
    deposit_charge, deposit_current, interpolate_e, moment_norms, solve_poisson, Grid3,
    MomentNorms, ScalarField, VectorField,
};
pub use profiles::{InitialData, Profile};
pub use twoscale::{
    convergence_sweep, l2_norm_f, pair_twoscale, pair_weak, rho_tau_independence, PairingResult,
    QuadSpec, SpaceTimeTestFunction, SweepReport, SweepRow, TauHarmonic, TestFunction,
};
pub use vp::{
    compare_runs, run_vp, sample_initial, CompareReport, ParticleEnsemble, RhoSeries, VpConfig,
    VpMode, VpRun,
};
