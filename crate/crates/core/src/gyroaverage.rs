//! The gyroaverage operator, homogenized initial data, and reconstruction of
//! the two-scale profile F from its gyrophase representative G.
//!
//! Normalization convention: G is stored with G(0) = f0 / (2 pi), and the
//! weak-* limit is recovered as f = integral of F over one period without any
//! extra 1/(2 pi). Mixing these two bookkeepings up is the likeliest
//! implementation bug, so every identity test pins them.

use std::sync::Arc;

use crate::error::Error;
use crate::geometry::{rotate_about_axis, UnitAxis, Vec3};

/// Uniform quadrature on the periodic gyrophase interval [0, 2 pi).
///
/// Equal-weight nodes are spectrally accurate for smooth periodic integrands
/// and exact for trigonometric polynomials of degree < node_count / 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GyroQuadrature {
    node_count: usize,
}

impl GyroQuadrature {
    pub fn new(node_count: usize) -> Result<Self, Error> {
        if node_count < 4 {
            return Err(Error::InvalidConfig(format!(
                "gyro quadrature needs at least 4 nodes, got {node_count}"
            )));
        }
        Ok(GyroQuadrature { node_count })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Phase nodes tau_k = 2 pi k / N.
    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.node_count as f64;
        (0..self.node_count).map(move |k| 2.0 * std::f64::consts::PI * k as f64 / n)
    }

    /// Weight of each node for an integral over [0, 2 pi).
    pub fn weight(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.node_count as f64
    }
}

impl Default for GyroQuadrature {
    fn default() -> Self {
        GyroQuadrature { node_count: 64 }
    }
}

/// A function of phase space (x, v) with a declared velocity support radius.
#[derive(Clone)]
pub struct VelocityFunction {
    f: Arc<dyn Fn(Vec3, Vec3) -> f64 + Send + Sync>,
    support_radius: f64,
}

impl VelocityFunction {
    pub fn new<F>(f: F, support_radius: f64) -> Self
    where
        F: Fn(Vec3, Vec3) -> f64 + Send + Sync + 'static,
    {
        VelocityFunction {
            f: Arc::new(f),
            support_radius,
        }
    }

    #[inline]
    pub fn eval(&self, x: Vec3, v: Vec3) -> f64 {
        (self.f)(x, v)
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }
}

impl std::fmt::Debug for VelocityFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VelocityFunction")
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

/// The rotation entering the drift-case gyroaverage: the gyration is centered
/// on the stationary drift n x M instead of the origin.
///
/// For M = e1, n = e2:
/// `v1 e1 + [v2 cos tau - (v3+1) sin tau] e2 + [v2 sin tau + (v3+1) cos tau - 1] e3`.
#[inline]
pub fn drift_rotation(v: Vec3, tau: f64, axis: UnitAxis, drift: UnitAxis) -> Vec3 {
    let vd = drift.as_vec().cross(axis.as_vec());
    vd + rotate_about_axis(v - vd, tau, axis)
}

/// Gyroaverage (1/2pi) integral of g(x, u(v, tau)) d tau.
pub fn gyroaverage(
    g: &VelocityFunction,
    x: Vec3,
    v: Vec3,
    axis: UnitAxis,
    quad: GyroQuadrature,
) -> f64 {
    let mut acc = 0.0;
    for tau in quad.taus() {
        acc += g.eval(x, rotate_about_axis(v, tau, axis));
    }
    acc / quad.node_count() as f64
}

/// Drift-case gyroaverage, using the shifted rotation of `drift_rotation`.
pub fn gyroaverage_drift(
    g: &VelocityFunction,
    x: Vec3,
    v: Vec3,
    axis: UnitAxis,
    drift: UnitAxis,
    quad: GyroQuadrature,
) -> f64 {
    let mut acc = 0.0;
    for tau in quad.taus() {
        acc += g.eval(x, drift_rotation(v, tau, axis, drift));
    }
    acc / quad.node_count() as f64
}

/// Initial data of the homogenized equation: the gyroaverage of f0 with the
/// plain rotation, or the drift-shifted one when a drift axis is given.
pub fn limit_initial_data(
    f0: &VelocityFunction,
    axis: UnitAxis,
    drift: Option<UnitAxis>,
    quad: GyroQuadrature,
) -> VelocityFunction {
    let f0 = f0.clone();
    let radius = match drift {
        // The shifted rotation can move the support by up to 2 |n x M| = 2.
        Some(_) => f0.support_radius() + 2.0,
        None => f0.support_radius(),
    };
    VelocityFunction::new(
        move |x, v| match drift {
            None => gyroaverage(&f0, x, v, axis, quad),
            Some(n) => gyroaverage_drift(&f0, x, v, axis, n, quad),
        },
        radius,
    )
}

/// Two-scale profile value F(t, tau, x, v) = G(t, x, u(v, tau)) for a fixed-t
/// slice of G; 2 pi periodic in tau by construction.
#[inline]
pub fn reconstruct_profile(
    g: &VelocityFunction,
    x: Vec3,
    tau: f64,
    v: Vec3,
    axis: UnitAxis,
) -> f64 {
    g.eval(x, rotate_about_axis(v, tau, axis))
}

/// Drift-case profile reconstruction.
#[inline]
pub fn reconstruct_profile_drift(
    g: &VelocityFunction,
    x: Vec3,
    tau: f64,
    v: Vec3,
    axis: UnitAxis,
    drift: UnitAxis,
) -> f64 {
    g.eval(x, drift_rotation(v, tau, axis, drift))
}
