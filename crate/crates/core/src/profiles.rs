//! Initial-data families. f0 is a product of a spatial and a velocity
//! profile, each from a small closed set of nonnegative analytic shapes, so
//! masses and moments are available in closed form and configurations stay
//! serializable.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{UnitAxis, Vec3};
use crate::gyroaverage::{drift_rotation, GyroQuadrature, VelocityFunction};

/// One factor of an initial datum: a nonnegative profile on R^3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `amplitude * exp(-|p - center|^2 / (2 sigma^2))`.
    Gaussian {
        amplitude: f64,
        center: Vec3,
        sigma: f64,
    },
    /// `amplitude` on the ball |p - center| <= radius, zero outside.
    Ball {
        amplitude: f64,
        center: Vec3,
        radius: f64,
    },
    /// `amplitude` on the axis-aligned box [lo, hi].
    UniformBox { amplitude: f64, lo: Vec3, hi: Vec3 },
}

/// Number of standard deviations after which a Gaussian is treated as
/// supported; exp(-36/2) ~ 1.5e-8 pointwise, 2e-16 for squared integrands.
const GAUSSIAN_SUPPORT_SIGMAS: f64 = 6.0;

impl Profile {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Profile::Gaussian {
                amplitude,
                center,
                sigma,
            } => {
                if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                    return Err(Error::InvalidConfig(
                        "profile amplitude must be >= 0".into(),
                    ));
                }
                if !center.is_finite() {
                    return Err(Error::InvalidConfig("profile center must be finite".into()));
                }
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "gaussian sigma must be > 0, got {sigma}"
                    )));
                }
            }
            Profile::Ball {
                amplitude,
                center,
                radius,
            } => {
                if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                    return Err(Error::InvalidConfig(
                        "profile amplitude must be >= 0".into(),
                    ));
                }
                if !center.is_finite() {
                    return Err(Error::InvalidConfig("profile center must be finite".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "ball radius must be > 0, got {radius}"
                    )));
                }
            }
            Profile::UniformBox { amplitude, lo, hi } => {
                if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                    return Err(Error::InvalidConfig(
                        "profile amplitude must be >= 0".into(),
                    ));
                }
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidConfig("box corners must be finite".into()));
                }
                if lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z {
                    return Err(Error::InvalidConfig(
                        "box must satisfy lo < hi per axis".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, p: Vec3) -> f64 {
        match self {
            Profile::Gaussian {
                amplitude,
                center,
                sigma,
            } => {
                let r2 = (p - *center).norm2();
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            Profile::Ball {
                amplitude,
                center,
                radius,
            } => {
                if (p - *center).norm2() <= radius * radius {
                    *amplitude
                } else {
                    0.0
                }
            }
            Profile::UniformBox { amplitude, lo, hi } => {
                let inside = p.x >= lo.x
                    && p.x <= hi.x
                    && p.y >= lo.y
                    && p.y <= hi.y
                    && p.z >= lo.z
                    && p.z <= hi.z;
                if inside {
                    *amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Integral over R^3, in closed form.
    pub fn mass(&self) -> f64 {
        match self {
            Profile::Gaussian {
                amplitude, sigma, ..
            } => amplitude * (2.0 * std::f64::consts::PI).powf(1.5) * sigma.powi(3),
            Profile::Ball {
                amplitude, radius, ..
            } => amplitude * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Profile::UniformBox { amplitude, lo, hi } => {
                amplitude * (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z)
            }
        }
    }

    /// Mean of |p|^2 under the normalized profile.
    pub fn mean_square(&self) -> f64 {
        match self {
            Profile::Gaussian { center, sigma, .. } => center.norm2() + 3.0 * sigma * sigma,
            Profile::Ball { center, radius, .. } => center.norm2() + 0.6 * radius * radius,
            Profile::UniformBox { lo, hi, .. } => {
                let mut s = 0.0;
                for d in 0..3 {
                    let (a, b) = (lo.to_array()[d], hi.to_array()[d]);
                    let m = 0.5 * (a + b);
                    let w = b - a;
                    s += m * m + w * w / 12.0;
                }
                s
            }
        }
    }

    /// True when the profile factors as g1(p1) g2(p2) g3(p3); quadratures
    /// exploit this to turn 3d sums into products of 1d sums.
    pub fn separable(&self) -> bool {
        matches!(self, Profile::Gaussian { .. } | Profile::UniformBox { .. })
    }

    /// One axis factor of a separable profile (the amplitude is attached to
    /// axis 0). Only meaningful when `separable()` holds.
    #[inline]
    pub fn eval_axis(&self, d: usize, coord: f64) -> f64 {
        match self {
            Profile::Gaussian {
                amplitude,
                center,
                sigma,
            } => {
                let dc = coord - center.to_array()[d];
                let f = (-dc * dc / (2.0 * sigma * sigma)).exp();
                if d == 0 {
                    amplitude * f
                } else {
                    f
                }
            }
            Profile::UniformBox { amplitude, lo, hi } => {
                let inside = coord >= lo.to_array()[d] && coord <= hi.to_array()[d];
                let f = if inside { 1.0 } else { 0.0 };
                if d == 0 {
                    amplitude * f
                } else {
                    f
                }
            }
            Profile::Ball { .. } => unreachable!("ball profiles are not separable"),
        }
    }

    /// Axis-aligned bounding box of the (numerical) support.
    pub fn support_box(&self) -> [[f64; 2]; 3] {
        let (c, r) = match self {
            Profile::Gaussian { center, sigma, .. } => (*center, GAUSSIAN_SUPPORT_SIGMAS * sigma),
            Profile::Ball { center, radius, .. } => (*center, *radius),
            Profile::UniformBox { lo, hi, .. } => {
                return [[lo.x, hi.x], [lo.y, hi.y], [lo.z, hi.z]];
            }
        };
        let c = c.to_array();
        [
            [c[0] - r, c[0] + r],
            [c[1] - r, c[1] + r],
            [c[2] - r, c[2] + r],
        ]
    }

    /// Radius of a ball about the origin containing the support.
    pub fn support_radius(&self) -> f64 {
        let b = self.support_box();
        let mut r2: f64 = 0.0;
        for corner in 0..8 {
            let p = Vec3::new(
                b[0][(corner >> 2) & 1],
                b[1][(corner >> 1) & 1],
                b[2][corner & 1],
            );
            r2 = r2.max(p.norm2());
        }
        r2.sqrt()
    }

    /// Map three uniforms in [0,1) to a sample of the normalized profile.
    pub fn sample(&self, u: [f64; 3]) -> Vec3 {
        match self {
            Profile::Gaussian { center, sigma, .. } => {
                *center
                    + Vec3::new(
                        crate::sampling::inverse_normal_cdf(u[0]),
                        crate::sampling::inverse_normal_cdf(u[1]),
                        crate::sampling::inverse_normal_cdf(u[2]),
                    ) * *sigma
            }
            Profile::Ball { center, radius, .. } => {
                let r = radius * u[0].cbrt();
                let z = 2.0 * u[1] - 1.0;
                let phi = 2.0 * std::f64::consts::PI * u[2];
                let s = (1.0 - z * z).max(0.0).sqrt();
                *center + Vec3::new(s * phi.cos(), s * phi.sin(), z) * r
            }
            Profile::UniformBox { lo, hi, .. } => Vec3::new(
                lo.x + u[0] * (hi.x - lo.x),
                lo.y + u[1] * (hi.y - lo.y),
                lo.z + u[2] * (hi.z - lo.z),
            ),
        }
    }
}

/// Product initial datum f0(x, v) = spatial(x) * velocity(v).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub spatial: Profile,
    pub velocity: Profile,
}

impl InitialData {
    pub fn new(spatial: Profile, velocity: Profile) -> Result<Self, Error> {
        spatial.validate()?;
        velocity.validate()?;
        Ok(InitialData { spatial, velocity })
    }

    #[inline]
    pub fn eval(&self, x: Vec3, v: Vec3) -> f64 {
        self.spatial.eval(x) * self.velocity.eval(v)
    }

    pub fn mass(&self) -> f64 {
        self.spatial.mass() * self.velocity.mass()
    }

    pub fn as_velocity_function(&self) -> VelocityFunction {
        let me = self.clone();
        let r = self.velocity.support_radius();
        VelocityFunction::new(move |x, v| me.eval(x, v), r)
    }

    /// Gyroaverage of the velocity factor alone (the spatial factor is a
    /// fixed point of the average).
    pub fn velocity_gyroaverage(
        &self,
        v: Vec3,
        axis: UnitAxis,
        drift: Option<UnitAxis>,
        quad: GyroQuadrature,
    ) -> f64 {
        let mut acc = 0.0;
        match drift {
            None => {
                for tau in quad.taus() {
                    acc += self
                        .velocity
                        .eval(crate::geometry::rotate_about_axis(v, tau, axis));
                }
            }
            Some(n) => {
                for tau in quad.taus() {
                    acc += self.velocity.eval(drift_rotation(v, tau, axis, n));
                }
            }
        }
        acc / quad.node_count() as f64
    }

    /// Pointwise value of the homogenized initial datum.
    pub fn eval_limit(
        &self,
        x: Vec3,
        v: Vec3,
        axis: UnitAxis,
        drift: Option<UnitAxis>,
        quad: GyroQuadrature,
    ) -> f64 {
        self.spatial.eval(x) * self.velocity_gyroaverage(v, axis, drift, quad)
    }
}
