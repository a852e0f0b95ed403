//! Analytic external field specifications.
//!
//! The strong components M/eps (and n/eps in the drift variant) are never
//! materialized as field values; integrators consume them analytically via
//! their closed-form flows. Only the epsilon-independent weak parts are
//! evaluated here. Field specs form a small declarative schema so that run
//! configurations are plain serializable data.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{UnitAxis, Vec3};

/// Declarative analytic field: (t, x) -> Vec3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Zero,
    /// Constant in space and time.
    Uniform {
        value: Vec3,
    },
    /// Uniform in space, `amplitude * cos(omega t + phase)` in time.
    Oscillating {
        amplitude: Vec3,
        omega: f64,
        phase: f64,
    },
    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    Gaussian {
        amplitude: Vec3,
        center: Vec3,
        width: f64,
    },
    /// Separable trigonometric field on a periodic box:
    /// `amplitude * prod_d cos(2 pi modes_d x_d / lengths_d + phases_d)`.
    Trig {
        amplitude: Vec3,
        lengths: [f64; 3],
        modes: [i32; 3],
        phases: [f64; 3],
    },
}

impl FieldSpec {
    pub fn eval(&self, t: f64, x: Vec3) -> Vec3 {
        match self {
            FieldSpec::Zero => Vec3::ZERO,
            FieldSpec::Uniform { value } => *value,
            FieldSpec::Oscillating {
                amplitude,
                omega,
                phase,
            } => *amplitude * (omega * t + phase).cos(),
            FieldSpec::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r2 = (x - *center).norm2();
                *amplitude * (-r2 / (width * width)).exp()
            }
            FieldSpec::Trig {
                amplitude,
                lengths,
                modes,
                phases,
            } => {
                let xs = x.to_array();
                let mut f = 1.0;
                for d in 0..3 {
                    let k = 2.0 * std::f64::consts::PI * modes[d] as f64 / lengths[d];
                    f *= (k * xs[d] + phases[d]).cos();
                }
                *amplitude * f
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSpec::Zero => true,
            FieldSpec::Uniform { value } => *value == Vec3::ZERO,
            _ => false,
        }
    }

    /// True when the field value does not depend on x.
    pub fn is_uniform_in_x(&self) -> bool {
        matches!(
            self,
            FieldSpec::Zero | FieldSpec::Uniform { .. } | FieldSpec::Oscillating { .. }
        )
    }

    /// True when the field value does not depend on t.
    pub fn is_static(&self) -> bool {
        matches!(
            self,
            FieldSpec::Zero
                | FieldSpec::Uniform { .. }
                | FieldSpec::Gaussian { .. }
                | FieldSpec::Trig { .. }
        )
    }

    /// Upper bound on |value| over all (t, x).
    pub fn sup_norm(&self) -> f64 {
        match self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Uniform { value } => value.norm(),
            FieldSpec::Oscillating { amplitude, .. } => amplitude.norm(),
            FieldSpec::Gaussian { amplitude, .. } => amplitude.norm(),
            FieldSpec::Trig { amplitude, .. } => amplitude.norm(),
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let finite = |v: Vec3, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{what} must be finite, got {v:?}"
                )))
            }
        };
        match self {
            FieldSpec::Zero => Ok(()),
            FieldSpec::Uniform { value } => finite(*value, "uniform field value"),
            FieldSpec::Oscillating {
                amplitude,
                omega,
                phase,
            } => {
                finite(*amplitude, "oscillating field amplitude")?;
                if omega.is_finite() && phase.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(
                        "oscillating field omega/phase must be finite".into(),
                    ))
                }
            }
            FieldSpec::Gaussian {
                amplitude,
                center,
                width,
            } => {
                finite(*amplitude, "gaussian field amplitude")?;
                finite(*center, "gaussian field center")?;
                if *width > 0.0 && width.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "gaussian field width must be > 0, got {width}"
                    )))
                }
            }
            FieldSpec::Trig {
                amplitude,
                lengths,
                phases,
                ..
            } => {
                finite(*amplitude, "trig field amplitude")?;
                if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "trig field lengths must be > 0".into(),
                    ));
                }
                if phases.iter().any(|p| !p.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "trig field phases must be finite".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Weak field values at one (t, x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub e: Vec3,
    pub b: Vec3,
}

/// Full external field specification: scale epsilon, strong axes, weak parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    epsilon: f64,
    axis: UnitAxis,
    drift_axis: Option<UnitAxis>,
    e_weak: FieldSpec,
    b_weak: FieldSpec,
    /// Times outside [0, horizon] are rejected by field evaluation.
    horizon: Option<f64>,
}

impl FieldConfig {
    pub fn new(
        epsilon: f64,
        axis: UnitAxis,
        drift_axis: Option<UnitAxis>,
        e_weak: FieldSpec,
        b_weak: FieldSpec,
        horizon: Option<f64>,
    ) -> Result<Self, Error> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if let Some(n) = drift_axis {
            let dot = n.dot(axis.as_vec()).abs();
            if dot > 1e-12 {
                return Err(Error::NonOrthogonalDrift(dot));
            }
        }
        if let Some(h) = horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "horizon must be > 0, got {h}"
                )));
            }
        }
        e_weak.validate()?;
        b_weak.validate()?;
        Ok(FieldConfig {
            epsilon,
            axis,
            drift_axis,
            e_weak,
            b_weak,
            horizon,
        })
    }

    /// Purely magnetic configuration with zero weak fields.
    pub fn magnetic(epsilon: f64, axis: UnitAxis) -> Result<Self, Error> {
        FieldConfig::new(epsilon, axis, None, FieldSpec::Zero, FieldSpec::Zero, None)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn axis(&self) -> UnitAxis {
        self.axis
    }

    pub fn drift_axis(&self) -> Option<UnitAxis> {
        self.drift_axis
    }

    pub fn e_weak_spec(&self) -> &FieldSpec {
        &self.e_weak
    }

    pub fn b_weak_spec(&self) -> &FieldSpec {
        &self.b_weak
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    /// Same configuration at a different scale.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, Error> {
        let mut c = self.clone();
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        c.epsilon = epsilon;
        Ok(c)
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self, Error> {
        let mut c = self.clone();
        if !(horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be > 0, got {horizon}"
            )));
        }
        c.horizon = Some(horizon);
        Ok(c)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<(), Error> {
        if let Some(h) = self.horizon {
            if !(0.0..=h).contains(&t) {
                return Err(Error::HorizonExceeded { t, horizon: h });
            }
        }
        Ok(())
    }

    /// Weak fields at (t, x); rejects times outside the horizon.
    pub fn eval_weak(&self, t: f64, x: Vec3) -> Result<FieldSample, Error> {
        self.check_time(t)?;
        Ok(self.eval_weak_unchecked(t, x))
    }

    #[inline]
    pub(crate) fn eval_weak_unchecked(&self, t: f64, x: Vec3) -> FieldSample {
        FieldSample {
            e: self.e_weak.eval(t, x),
            b: self.b_weak.eval(t, x),
        }
    }

    /// The complete force E_weak + n/eps + v x (B_weak + M/eps).
    ///
    /// Used by the brute-force oracle integrator only; the production pusher
    /// splits the stiff part analytically.
    pub fn total_force(&self, t: f64, x: Vec3, v: Vec3) -> Result<Vec3, Error> {
        self.check_time(t)?;
        Ok(self.total_force_unchecked(t, x, v))
    }

    #[inline]
    pub(crate) fn total_force_unchecked(&self, t: f64, x: Vec3, v: Vec3) -> Vec3 {
        let w = self.eval_weak_unchecked(t, x);
        let inv_eps = 1.0 / self.epsilon;
        let mut f = w.e + v.cross(w.b + self.axis.as_vec() * inv_eps);
        if let Some(n) = self.drift_axis {
            f += n.as_vec() * inv_eps;
        }
        f
    }

    pub fn weak_fields_zero(&self) -> bool {
        self.e_weak.is_zero() && self.b_weak.is_zero()
    }

    pub fn weak_fields_uniform_in_x(&self) -> bool {
        self.e_weak.is_uniform_in_x() && self.b_weak.is_uniform_in_x()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_gaussian_eval() {
        let e = FieldSpec::Uniform { value: Vec3::X };
        assert_eq!(e.eval(3.7, Vec3::new(1.0, 2.0, 3.0)), Vec3::X);

        let g = FieldSpec::Gaussian {
            amplitude: Vec3::X,
            center: Vec3::ZERO,
            width: 1.0,
        };
        assert_eq!(g.eval(0.0, Vec3::ZERO), Vec3::X);
        let v = g.eval(0.0, Vec3::new(1.0, 0.0, 0.0));
        assert!((v.x - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn oscillating_field_eval() {
        let spec = FieldSpec::Oscillating { amplitude: Vec3::Y * 2.0, omega: 3.0, phase: 0.5 };
        let v = spec.eval(0.7, Vec3::new(9.0, -4.0, 2.0)); // uniform in space
        assert!((v.y - 2.0 * (3.0f64 * 0.7 + 0.5).cos()).abs() < 1e-15);
        assert!(spec.is_uniform_in_x() && !spec.is_static());
    }

    #[test]
    fn weak_sample_carries_both_fields() {
        let b0 = 2.5;
        let cfg = FieldConfig::new(
            0.1,
            UnitAxis::e1(),
            None,
            FieldSpec::Zero,
            FieldSpec::Uniform {
                value: Vec3::X * b0,
            },
            None,
        )
        .unwrap();
        let s = cfg.eval_weak(0.3, Vec3::new(0.1, 0.2, 0.3)).unwrap();
        assert_eq!(s.e, Vec3::ZERO);
        assert_eq!(s.b, Vec3::new(b0, 0.0, 0.0));
    }

    #[test]
    fn horizon_rejected() {
        let cfg = FieldConfig::magnetic(0.1, UnitAxis::e1())
            .unwrap()
            .with_horizon(1.0)
            .unwrap();
        assert!(cfg.eval_weak(0.5, Vec3::ZERO).is_ok());
        assert!(matches!(
            cfg.eval_weak(1.5, Vec3::ZERO),
            Err(Error::HorizonExceeded { .. })
        ));
        assert!(cfg.eval_weak(-0.1, Vec3::ZERO).is_err());
    }

    #[test]
    fn total_force_examples() {
        let m = UnitAxis::e1();
        let cfg = FieldConfig::magnetic(1.0, m).unwrap();
        // v parallel to M: no force.
        assert_eq!(
            cfg.total_force(0.0, Vec3::ZERO, Vec3::X).unwrap(),
            Vec3::ZERO
        );
        // v = e2, M = e1, eps = 1: e2 x e1 = -e3.
        let f = cfg.total_force(0.0, Vec3::ZERO, Vec3::Y).unwrap();
        assert!((f - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);

        // Drift case: n/eps arithmetic.
        let cfg = FieldConfig::new(
            0.5,
            m,
            Some(UnitAxis::e2()),
            FieldSpec::Zero,
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let f = cfg.total_force(0.0, Vec3::ZERO, Vec3::ZERO).unwrap();
        assert!((f - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn drift_axis_must_be_orthogonal() {
        let r = FieldConfig::new(
            0.1,
            UnitAxis::e1(),
            Some(UnitAxis::new(Vec3::new(0.5, 1.0, 0.0)).unwrap()),
            FieldSpec::Zero,
            FieldSpec::Zero,
            None,
        );
        assert!(matches!(r, Err(Error::NonOrthogonalDrift(_))));
    }

    #[test]
    fn force_is_divergence_free_in_v() {
        // Central differences of div_v(total_force) at pseudo-random points.
        let cfg = FieldConfig::new(
            0.2,
            UnitAxis::new(Vec3::new(0.3, 0.7, -0.2)).unwrap(),
            None,
            FieldSpec::Gaussian {
                amplitude: Vec3::new(0.5, 0.1, 0.0),
                center: Vec3::ZERO,
                width: 2.0,
            },
            FieldSpec::Uniform {
                value: Vec3::new(0.0, 0.3, 0.1),
            },
            None,
        )
        .unwrap();
        let h = 1e-5;
        let mut s = 12345u64;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..50 {
            let (t, x, v) = (
                next().abs(),
                Vec3::new(next(), next(), next()),
                Vec3::new(next(), next(), next()),
            );
            let mut div = 0.0;
            for d in 0..3 {
                let mut dv = [0.0; 3];
                dv[d] = h;
                let dv = Vec3::from_array(dv);
                let fp = cfg.total_force(t, x, v + dv).unwrap().to_array()[d];
                let fm = cfg.total_force(t, x, v - dv).unwrap().to_array()[d];
                div += (fp - fm) / (2.0 * h);
            }
            assert!(div.abs() < 1e-6, "div_v force = {div}");
        }
    }
}
