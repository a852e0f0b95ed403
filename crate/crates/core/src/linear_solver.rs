//! Pointwise evaluation of the exact solutions of the linear problems by
//! backward characteristics: the finite-epsilon solution f_eps, the
//! homogenized limit f, and the gyrophase representative G whose rotation
//! reconstructs the two-scale profile F.
//!
//! No phase-space grids are stored; every diagnostic is a quadrature over
//! structured node sets, and pointwise backward evaluation is exact and
//! memory-light.

use serde::{Deserialize, Serialize};

use crate::characteristics::{
    push_full, push_limit, push_limit_drift, IntegratorSettings, PhasePoint,
};
use crate::error::Error;
use crate::fields::FieldConfig;
use crate::geometry::{rotate_about_axis, Vec3};
use crate::gyroaverage::{drift_rotation, GyroQuadrature};
use crate::profiles::InitialData;

/// Which linear problem: strong magnetic field only, or the variant with an
/// additional strong electric field orthogonal to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MagneticOnly,
    MagneticPlusDrift,
}

/// A linear transport problem with analytic initial data on a time horizon.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    cfg: FieldConfig,
    f0: InitialData,
    variant: Variant,
    gyro: GyroQuadrature,
}

impl LinearProblem {
    pub fn new(
        cfg: FieldConfig,
        f0: InitialData,
        variant: Variant,
        horizon: f64,
        gyro: GyroQuadrature,
    ) -> Result<Self, Error> {
        if variant == Variant::MagneticPlusDrift && cfg.drift_axis().is_none() {
            return Err(Error::InvalidConfig(
                "the drift variant requires a configured drift axis".into(),
            ));
        }
        let cfg = cfg.with_horizon(horizon)?;
        Ok(LinearProblem {
            cfg,
            f0,
            variant,
            gyro,
        })
    }

    pub fn cfg(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn f0(&self) -> &InitialData {
        &self.f0
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn gyro(&self) -> GyroQuadrature {
        self.gyro
    }

    pub fn horizon(&self) -> f64 {
        self.cfg
            .horizon()
            .expect("constructor always sets a horizon")
    }

    /// The same problem at a different scale.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, Error> {
        Ok(LinearProblem {
            cfg: self.cfg.with_epsilon(epsilon)?,
            ..self.clone()
        })
    }

    /// Backward foot of the full characteristics starting at (x, v) at time t.
    pub(crate) fn backward_full(
        &self,
        t: f64,
        x: Vec3,
        v: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<PhasePoint, Error> {
        push_full(PhasePoint::new(x, v), &self.cfg, t, 0.0, settings)
    }

    /// Backward foot of the limit characteristics.
    pub(crate) fn backward_limit(
        &self,
        t: f64,
        x: Vec3,
        v: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<PhasePoint, Error> {
        let p = PhasePoint::new(x, v);
        match self.variant {
            Variant::MagneticOnly => push_limit(p, &self.cfg, t, 0.0, settings),
            Variant::MagneticPlusDrift => push_limit_drift(p, &self.cfg, t, 0.0, settings),
        }
    }

    /// Gyrophase rotation used by this problem's averages and profiles.
    #[inline]
    pub fn rotation(&self, v: Vec3, tau: f64) -> Vec3 {
        match self.variant {
            Variant::MagneticOnly => rotate_about_axis(v, tau, self.cfg.axis()),
            Variant::MagneticPlusDrift => {
                drift_rotation(v, tau, self.cfg.axis(), self.cfg.drift_axis().unwrap())
            }
        }
    }

    fn drift_for_average(&self) -> Option<crate::geometry::UnitAxis> {
        match self.variant {
            Variant::MagneticOnly => None,
            Variant::MagneticPlusDrift => self.cfg.drift_axis(),
        }
    }

    /// f_eps(t, x, v) = f0 at the backward foot of the full characteristics.
    pub fn eval_f_eps(
        &self,
        t: f64,
        x: Vec3,
        v: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<f64, Error> {
        let foot = self.backward_full(t, x, v, settings)?;
        Ok(self.f0.eval(foot.x, foot.v))
    }

    /// f(t, x, v): the homogenized solution, evaluated from the gyroaveraged
    /// initial data at the backward foot of the limit characteristics.
    /// Independent of epsilon by construction.
    pub fn eval_f_limit(
        &self,
        t: f64,
        x: Vec3,
        v: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<f64, Error> {
        let foot = self.backward_limit(t, x, v, settings)?;
        Ok(self.f0.eval_limit(
            foot.x,
            foot.v,
            self.cfg.axis(),
            self.drift_for_average(),
            self.gyro,
        ))
    }

    /// G(t, x, u): the gyrophase representative, transported by the same
    /// limit flow from G(0) = f0 / (2 pi).
    pub fn eval_g(
        &self,
        t: f64,
        x: Vec3,
        u: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<f64, Error> {
        let foot = self.backward_limit(t, x, u, settings)?;
        Ok(self.f0.eval(foot.x, foot.v) / (2.0 * std::f64::consts::PI))
    }

    /// Two-scale profile F(t, tau, x, v) = G(t, x, u(v, tau)).
    pub fn eval_profile(
        &self,
        t: f64,
        tau: f64,
        x: Vec3,
        v: Vec3,
        settings: &IntegratorSettings,
    ) -> Result<f64, Error> {
        self.eval_g(t, x, self.rotation(v, tau), settings)
    }

    /// Axis-aligned boxes certain to contain the support of f_eps and f at
    /// every time up to the horizon; used by norm quadratures. Conservative.
    pub fn support_box_at_horizon(&self) -> ([[f64; 2]; 3], [[f64; 2]; 3]) {
        let t = self.horizon();
        let eps = self.cfg.epsilon();
        let sup_e = self.cfg.e_weak_spec().sup_norm();
        let v_rad = self.f0.velocity.support_radius();
        let vd = match self.drift_for_average() {
            Some(n) => n.as_vec().cross(self.cfg.axis().as_vec()),
            None => Vec3::ZERO,
        };
        // Speed bound: gyration preserves |v - vd|; weak E adds t * sup|E|.
        let vmax = v_rad + 2.0 * vd.norm() + t * sup_e;

        let m = self.cfg.axis().as_vec().to_array();
        let vd = vd.to_array();
        let x0 = self.f0.spatial.support_box();
        let mut xbox = [[0.0; 2]; 3];
        for d in 0..3 {
            // Parallel transport + stationary drift + Larmor excursion +
            // weak-field secular displacement.
            let infl =
                m[d].abs() * t * vmax + vd[d].abs() * t + 2.5 * eps * vmax + 0.5 * t * t * sup_e;
            xbox[d] = [x0[d][0] - infl, x0[d][1] + infl];
        }
        let vr = v_rad + 2.0 * vd.iter().map(|c| c.abs()).fold(0.0, f64::max) + t * sup_e;
        let vbox = [[-vr, vr], [-vr, vr], [-vr, vr]];
        (xbox, vbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldSpec;
    use crate::geometry::{parallel_part, UnitAxis};
    use crate::profiles::Profile;
    use std::f64::consts::PI;

    fn default_problem(eps: f64, variant: Variant) -> LinearProblem {
        let drift = match variant {
            Variant::MagneticOnly => None,
            Variant::MagneticPlusDrift => Some(UnitAxis::e2()),
        };
        let cfg = FieldConfig::new(
            eps,
            UnitAxis::e1(),
            drift,
            FieldSpec::Zero,
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let f0 = InitialData::new(
            Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::ZERO,
                sigma: 0.5,
            },
            Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::new(0.0, 0.5, 0.0),
                sigma: 0.5,
            },
        )
        .unwrap();
        LinearProblem::new(cfg, f0, variant, 2.0, GyroQuadrature::new(64).unwrap()).unwrap()
    }

    fn settings() -> IntegratorSettings {
        IntegratorSettings::exact_split(0.02).unwrap()
    }

    #[test]
    fn f_eps_at_time_zero_is_f0() {
        let p = default_problem(0.1, Variant::MagneticOnly);
        let (x, v) = (Vec3::new(0.1, 0.2, -0.1), Vec3::new(0.3, 0.6, 0.1));
        let got = p.eval_f_eps(0.0, x, v, &settings()).unwrap();
        assert!((got - p.f0().eval(x, v)).abs() < 1e-15);
    }

    #[test]
    fn f_eps_matches_helix_oracle() {
        // E = B = 0: backward foot in closed form.
        let eps = 0.07;
        let p = default_problem(eps, Variant::MagneticOnly);
        let m = UnitAxis::e1();
        let s = settings();
        for (t, x, v) in [
            (0.31, Vec3::new(0.2, -0.1, 0.3), Vec3::new(0.4, 0.7, -0.2)),
            (1.9, Vec3::new(-0.4, 0.0, 0.1), Vec3::new(0.0, 1.0, 0.5)),
        ] {
            let phi = t / eps;
            let v0 = crate::characteristics::fast_flow(v, 0.0, phi, m);
            let par = parallel_part(v0, m);
            let perp = v0 - par;
            let disp = par * t
                + perp * (eps * phi.sin())
                + perp.cross(m.as_vec()) * (eps * (1.0 - phi.cos()));
            let oracle = p.f0().eval(x - disp, v0);
            let got = p.eval_f_eps(t, x, v, &s).unwrap();
            assert!((got - oracle).abs() < 1e-13, "got {got} oracle {oracle}");
        }
    }

    #[test]
    fn f_eps_nonnegative() {
        let p = default_problem(0.05, Variant::MagneticOnly);
        let s = settings();
        let mut st = 5u64;
        let mut next = move || {
            st = st
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (st >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..100 {
            let t = (next() + 2.0) / 2.0;
            let val = p
                .eval_f_eps(
                    t,
                    Vec3::new(next(), next(), next()),
                    Vec3::new(next(), next(), next()),
                    &s,
                )
                .unwrap();
            assert!(val >= 0.0);
        }
    }

    #[test]
    fn f_limit_free_streaming_oracle() {
        let p = default_problem(0.1, Variant::MagneticOnly);
        let s = settings();
        let (t, x, v) = (1.2, Vec3::new(0.3, 0.1, -0.2), Vec3::new(0.5, 0.4, 0.2));
        let got = p.eval_f_limit(t, x, v, &s).unwrap();
        let x0 = x - parallel_part(v, UnitAxis::e1()) * t;
        let oracle = p.f0().eval_limit(x0, v, UnitAxis::e1(), None, p.gyro());
        assert!((got - oracle).abs() < 1e-13);
    }

    #[test]
    fn f_limit_gyrotropic_f0_fixed_at_t0() {
        let cfg = FieldConfig::magnetic(0.1, UnitAxis::e1()).unwrap();
        let f0 = InitialData::new(
            Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::ZERO,
                sigma: 0.5,
            },
            Profile::Gaussian {
                amplitude: 2.0,
                center: Vec3::ZERO,
                sigma: 0.7,
            },
        )
        .unwrap();
        let p =
            LinearProblem::new(cfg, f0, Variant::MagneticOnly, 1.0, Default::default()).unwrap();
        let (x, v) = (Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.3, -0.4, 0.5));
        let got = p.eval_f_limit(0.0, x, v, &settings()).unwrap();
        assert!((got - p.f0().eval(x, v)).abs() < 1e-13);
    }

    #[test]
    fn f_limit_drift_advection_oracle() {
        let p = default_problem(0.1, Variant::MagneticPlusDrift);
        let s = settings();
        let (t, x, v) = (0.8, Vec3::new(0.2, 0.0, 0.4), Vec3::new(0.5, 0.3, -0.1));
        let got = p.eval_f_limit(t, x, v, &s).unwrap();
        // Advection vector (v1, 0, -1).
        let x0 = x - Vec3::new(v.x, 0.0, -1.0) * t;
        let oracle = p
            .f0()
            .eval_limit(x0, v, UnitAxis::e1(), Some(UnitAxis::e2()), p.gyro());
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn f_limit_independent_of_epsilon() {
        let p_a = default_problem(0.2, Variant::MagneticOnly);
        let p_b = p_a.with_epsilon(0.025).unwrap();
        let s = settings();
        let (t, x, v) = (0.9, Vec3::new(0.2, -0.3, 0.1), Vec3::new(0.4, 0.5, 0.6));
        let a = p_a.eval_f_limit(t, x, v, &s).unwrap();
        let b = p_b.eval_f_limit(t, x, v, &s).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn g_at_time_zero() {
        let p = default_problem(0.1, Variant::MagneticOnly);
        let (x, u) = (Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.2, 0.4, -0.3));
        let got = p.eval_g(0.0, x, u, &settings()).unwrap();
        assert!((got - p.f0().eval(x, u) / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn profile_integral_recovers_f_limit() {
        // integral over tau of G(t, x, u(v, tau)) equals f(t, x, v),
        // for both variants (the 1/(2 pi) sits inside G).
        let s = settings();
        for variant in [Variant::MagneticOnly, Variant::MagneticPlusDrift] {
            let p = default_problem(0.1, variant);
            let q = p.gyro();
            let (t, x, v) = (0.7, Vec3::new(0.3, 0.1, 0.0), Vec3::new(0.2, 0.5, -0.4));
            let mut acc = 0.0;
            for tau in q.taus() {
                acc += p.eval_profile(t, tau, x, v, &s).unwrap() * q.weight();
            }
            let f = p.eval_f_limit(t, x, v, &s).unwrap();
            assert!((acc - f).abs() < 1e-10, "variant {variant:?}: {acc} vs {f}");
        }
    }

    #[test]
    fn drift_g_satisfies_printed_pde() {
        // Finite-difference residual of the drift-case transport equation for
        // G along scattered points, with uniform weak E and B.
        let cfg = FieldConfig::new(
            0.1,
            UnitAxis::e1(),
            Some(UnitAxis::e2()),
            FieldSpec::Uniform {
                value: Vec3::new(0.3, 0.0, 0.0),
            },
            FieldSpec::Uniform {
                value: Vec3::new(0.2, 0.4, 0.0),
            },
            None,
        )
        .unwrap();
        let f0 = InitialData::new(
            Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::ZERO,
                sigma: 0.8,
            },
            Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::new(0.1, 0.2, -0.1),
                sigma: 0.7,
            },
        )
        .unwrap();
        let p = LinearProblem::new(cfg, f0, Variant::MagneticPlusDrift, 2.0, Default::default())
            .unwrap();
        let s = IntegratorSettings::exact_split(0.005).unwrap();
        let h = 1e-4;
        let (e1f, b1, b2) = (0.3, 0.2, 0.4);
        for (t, x, u) in [
            (0.5, Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.2, 0.3, -0.1)),
            (0.9, Vec3::new(-0.2, 0.1, 0.0), Vec3::new(0.0, -0.4, 0.3)),
        ] {
            let g = |t: f64, x: Vec3, u: Vec3| p.eval_g(t, x, u, &s).unwrap();
            let dt = (g(t + h, x, u) - g(t - h, x, u)) / (2.0 * h);
            let grad = |f: &dyn Fn(Vec3) -> f64, p0: Vec3| {
                let mut out = [0.0; 3];
                for d in 0..3 {
                    let mut dp = [0.0; 3];
                    dp[d] = h;
                    let dp = Vec3::from_array(dp);
                    out[d] = (f(p0 + dp) - f(p0 - dp)) / (2.0 * h);
                }
                Vec3::from_array(out)
            };
            let gx = grad(&|xx: Vec3| g(t, xx, u), x);
            let gu = grad(&|uu: Vec3| g(t, x, uu), u);
            // dG/dt + (u1, 0, -1) . grad_x G
            //   + [(E1 - B2, 0, 0) + (u1, u2, u3 + 1) x (B1, 0, 0)] . grad_u G = 0.
            let adv_x = Vec3::new(u.x, 0.0, -1.0);
            let force = Vec3::new(e1f - b2, 0.0, 0.0)
                + Vec3::new(u.x, u.y, u.z + 1.0).cross(Vec3::new(b1, 0.0, 0.0));
            let residual = dt + adv_x.dot(gx) + force.dot(gu);
            assert!(residual.abs() < 1e-5, "residual {residual}");
        }
    }
}
