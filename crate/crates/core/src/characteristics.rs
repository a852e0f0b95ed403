//! ODE flows: the fast gyro-rotation, the fast rotation with drift, the full
//! stiff characteristics, and the homogenized limit characteristics.
//!
//! The production pusher (`Scheme::ExactSplit`) never integrates the stiff
//! 1/eps terms numerically: they are applied through their closed-form
//! solutions, so the scheme is unconditionally stable, preserves the fast
//! invariants exactly, and for zero weak fields the whole step is exact to
//! round-off. Time-dependent weak fields are evaluated at the midpoints of
//! the two half-kicks (t + h/4 and t + 3h/4 of a substep of width h).
//! A classical RK4 step on the complete force (`Scheme::Rk4Oracle`) serves
//! as an independent cross-check and must resolve the gyroperiod.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fields::FieldConfig;
use crate::geometry::{parallel_part, UnitAxis, Vec3};

/// One point of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec3,
    pub v: Vec3,
}

impl PhasePoint {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        PhasePoint { x, v }
    }
}

/// Characteristic solution of dV/dtau = V x M with V(s) = v.
///
/// For M = e1 this is
/// `v1 e1 + [v2 cos(tau-s) + v3 sin(tau-s)] e2 + [-v2 sin(tau-s) + v3 cos(tau-s)] e3`
/// and in particular `fast_flow(v, 0, tau, M) = rotate_about_axis(v, tau, M)`.
#[inline]
pub fn fast_flow(v: Vec3, tau: f64, s: f64, axis: UnitAxis) -> Vec3 {
    let theta = tau - s;
    let par = parallel_part(v, axis);
    let perp = v - par;
    par + perp * theta.cos() + perp.cross(axis.as_vec()) * theta.sin()
}

/// Characteristic solution of dV/dtau = n + V x M with V(s) = v.
///
/// Requires n orthogonal to M; the stationary drift n x M splits off and the
/// remainder gyrates. For M = e1, n = e2 this reproduces
/// `v1 e1 + [v2 cos(tau-s) + (v3+1) sin(tau-s)] e2 + [-v2 sin(tau-s) + (v3+1) cos(tau-s) - 1] e3`.
pub fn fast_flow_drift(
    v: Vec3,
    tau: f64,
    s: f64,
    axis: UnitAxis,
    drift: UnitAxis,
) -> Result<Vec3, Error> {
    let dot = drift.dot(axis.as_vec()).abs();
    if dot > 1e-12 {
        return Err(Error::NonOrthogonalDrift(dot));
    }
    Ok(fast_flow_drift_unchecked(v, tau, s, axis, drift))
}

#[inline]
pub(crate) fn fast_flow_drift_unchecked(
    v: Vec3,
    tau: f64,
    s: f64,
    axis: UnitAxis,
    drift: UnitAxis,
) -> Vec3 {
    let vd = drift.as_vec().cross(axis.as_vec());
    vd + fast_flow(v - vd, tau, s, axis)
}

/// Time stepping scheme for the full (stiff) characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Strang splitting with exact closed-form stiff rotation and exact
    /// constant-field kicks; weak fields evaluated at kick midpoints.
    ExactSplit,
    /// Classical 4th-order step on the complete force, including the stiff
    /// terms. Requires dt <= 2 pi eps / substeps_per_gyroperiod.
    Rk4Oracle,
}

/// Step-size and safety settings for all pushers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub substeps_per_gyroperiod: u32,
    pub scheme: Scheme,
    /// Speed above which a step is rejected (configuration error guard).
    pub velocity_bound: f64,
}

impl IntegratorSettings {
    pub fn new(dt: f64, substeps_per_gyroperiod: u32, scheme: Scheme) -> Result<Self, Error> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if substeps_per_gyroperiod < 8 {
            return Err(Error::InvalidConfig(format!(
                "substeps_per_gyroperiod must be >= 8, got {substeps_per_gyroperiod}"
            )));
        }
        Ok(IntegratorSettings {
            dt,
            substeps_per_gyroperiod,
            scheme,
            velocity_bound: 1e6,
        })
    }

    pub fn exact_split(dt: f64) -> Result<Self, Error> {
        IntegratorSettings::new(dt, 16, Scheme::ExactSplit)
    }

    pub fn rk4(dt: f64, substeps_per_gyroperiod: u32) -> Result<Self, Error> {
        IntegratorSettings::new(dt, substeps_per_gyroperiod, Scheme::Rk4Oracle)
    }

    pub fn with_velocity_bound(mut self, bound: f64) -> Self {
        self.velocity_bound = bound;
        self
    }

    fn check_speed(&self, v: Vec3) -> Result<(), Error> {
        let n = v.norm();
        if n > self.velocity_bound || !n.is_finite() {
            return Err(Error::VelocityBlowup(n, self.velocity_bound));
        }
        Ok(())
    }
}

/// Exact solution of dV/dt = e + V x b over duration h, for constant e, b.
///
/// Decomposes into the E x B drift, parallel acceleration, and gyration
/// about b; falls back to a Taylor step when |b| h is tiny so the drift
/// decomposition cannot lose precision.
#[inline]
fn kick_exact(v: Vec3, e: Vec3, b: Vec3, h: f64) -> Vec3 {
    let bn = b.norm();
    let theta = bn * h;
    if theta.abs() < 1e-4 {
        // Series through h^3; next omitted term is O((|b| h)^3 h |force|).
        let f1 = e + v.cross(b);
        let f2 = e.cross(b) + v.cross(b).cross(b);
        let f3 = e.cross(b).cross(b) + v.cross(b).cross(b).cross(b);
        return v + f1 * h + f2 * (h * h / 2.0) + f3 * (h * h * h / 6.0);
    }
    let bhat = b * (1.0 / bn);
    let vd = e.cross(b) * (1.0 / (bn * bn));
    let e_par = bhat * e.dot(bhat);
    let w = v - vd;
    let w_par = bhat * w.dot(bhat);
    let w_perp = w - w_par;
    vd + w_par + e_par * h + w_perp * theta.cos() + w_perp.cross(bhat) * theta.sin()
}

/// Exact stiff substep: gyration (with optional inhomogeneous drift) plus the
/// analytically integrated helix displacement.
#[inline]
pub(crate) fn stiff_step(
    v: Vec3,
    h: f64,
    eps: f64,
    axis: UnitAxis,
    drift: Option<UnitAxis>,
) -> (Vec3, Vec3) {
    let phi = h / eps;
    let vd = match drift {
        Some(n) => n.as_vec().cross(axis.as_vec()),
        None => Vec3::ZERO,
    };
    let w = v - vd;
    let w_par = parallel_part(w, axis);
    let w_perp = w - w_par;
    let rot = w_perp.cross(axis.as_vec());
    let v_new = vd + w_par + w_perp * phi.cos() + rot * phi.sin();
    let dx = (vd + w_par) * h + w_perp * (eps * phi.sin()) + rot * (eps * (1.0 - phi.cos()));
    (dx, v_new)
}

fn substep_count(span: f64, dt: f64) -> usize {
    ((span.abs() / dt).ceil() as usize).max(1)
}

/// Advance the full stiff characteristics dX/dt = V,
/// dV/dt = E_weak + n/eps + V x (B_weak + M/eps) from t0 to t1.
///
/// t1 < t0 integrates backward. For zero weak fields the exact-split path
/// takes a single closed-form step regardless of dt.
pub fn push_full(
    p: PhasePoint,
    cfg: &FieldConfig,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<PhasePoint, Error> {
    cfg.check_time(t0)?;
    cfg.check_time(t1)?;
    settings.check_speed(p.v)?;
    if t0 == t1 {
        return Ok(p);
    }
    let span = t1 - t0;
    match settings.scheme {
        Scheme::ExactSplit => {
            let n = if cfg.weak_fields_zero() {
                1
            } else {
                substep_count(span, settings.dt)
            };
            let h = span / n as f64;
            let eps = cfg.epsilon();
            let axis = cfg.axis();
            let drift = cfg.drift_axis();
            let mut x = p.x;
            let mut v = p.v;
            for k in 0..n {
                let t = t0 + span * (k as f64 / n as f64);
                let w1 = cfg.eval_weak_unchecked(t + 0.25 * h, x);
                v = kick_exact(v, w1.e, w1.b, 0.5 * h);
                let (dx, vr) = stiff_step(v, h, eps, axis, drift);
                x += dx;
                v = vr;
                let w2 = cfg.eval_weak_unchecked(t + 0.75 * h, x);
                v = kick_exact(v, w2.e, w2.b, 0.5 * h);
                settings.check_speed(v)?;
            }
            Ok(PhasePoint { x, v })
        }
        Scheme::Rk4Oracle => {
            let max_dt = 2.0 * std::f64::consts::PI * cfg.epsilon()
                / settings.substeps_per_gyroperiod as f64;
            if settings.dt > max_dt * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "rk4 oracle dt = {} exceeds 2 pi eps / substeps = {max_dt}",
                    settings.dt
                )));
            }
            let deriv = |t: f64, x: Vec3, v: Vec3| (v, cfg.total_force_unchecked(t, x, v));
            rk4_loop(p, t0, span, settings, deriv)
        }
    }
}

/// Advance the homogenized characteristics dX/dt = v_par,
/// dV/dt = E_par + v x B_par (RK4; no eps anywhere).
pub fn push_limit(
    p: PhasePoint,
    cfg: &FieldConfig,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<PhasePoint, Error> {
    cfg.check_time(t0)?;
    cfg.check_time(t1)?;
    settings.check_speed(p.v)?;
    if t0 == t1 {
        return Ok(p);
    }
    let axis = cfg.axis();
    let m = axis.as_vec();
    let deriv = |t: f64, x: Vec3, v: Vec3| {
        let w = cfg.eval_weak_unchecked(t, x);
        let e_par = m * w.e.dot(m);
        let b_par = m * w.b.dot(m);
        (parallel_part(v, axis), e_par + v.cross(b_par))
    };
    rk4_loop_limit(p, cfg, t0, t1 - t0, settings, deriv)
}

/// Advance the drift-case homogenized characteristics
/// dX/dt = v_par + n x M, dV/dt = ((E.M) - (B.n)) M + (v - n x M) x B_par.
///
/// For M = e1, n = e2 this is the advection field
/// dX/dt = (v1, 0, -1), dV/dt = (E1 - B2, 0, 0) + (v1, v2, v3 + 1) x (B1, 0, 0).
pub fn push_limit_drift(
    p: PhasePoint,
    cfg: &FieldConfig,
    t0: f64,
    t1: f64,
    settings: &IntegratorSettings,
) -> Result<PhasePoint, Error> {
    let drift = cfg.drift_axis().ok_or_else(|| {
        Error::InvalidConfig("push_limit_drift requires a configured drift axis".into())
    })?;
    cfg.check_time(t0)?;
    cfg.check_time(t1)?;
    settings.check_speed(p.v)?;
    if t0 == t1 {
        return Ok(p);
    }
    let axis = cfg.axis();
    let m = axis.as_vec();
    let vd = drift.as_vec().cross(m);
    let deriv = |t: f64, x: Vec3, v: Vec3| {
        let w = cfg.eval_weak_unchecked(t, x);
        let accel = m * (w.e.dot(m) - w.b.dot(drift.as_vec()));
        let b_par = m * w.b.dot(m);
        (parallel_part(v, axis) + vd, accel + (v - vd).cross(b_par))
    };
    rk4_loop_limit(p, cfg, t0, t1 - t0, settings, deriv)
}

/// RK4 driver for the non-stiff limit systems. Takes a single step when the
/// weak fields are static and uniform and the weak magnetic field vanishes
/// (the flow is then polynomial in time and RK4 is exact).
fn rk4_loop_limit<F>(
    p: PhasePoint,
    cfg: &FieldConfig,
    t0: f64,
    span: f64,
    settings: &IntegratorSettings,
    deriv: F,
) -> Result<PhasePoint, Error>
where
    F: Fn(f64, Vec3, Vec3) -> (Vec3, Vec3),
{
    let single = cfg.b_weak_spec().is_zero()
        && cfg.e_weak_spec().is_static()
        && cfg.e_weak_spec().is_uniform_in_x();
    let mut s = *settings;
    if single {
        s.dt = span.abs().max(settings.dt);
    }
    rk4_loop(p, t0, span, &s, deriv)
}

fn rk4_loop<F>(
    p: PhasePoint,
    t0: f64,
    span: f64,
    settings: &IntegratorSettings,
    deriv: F,
) -> Result<PhasePoint, Error>
where
    F: Fn(f64, Vec3, Vec3) -> (Vec3, Vec3),
{
    let n = substep_count(span, settings.dt);
    let h = span / n as f64;
    let mut x = p.x;
    let mut v = p.v;
    for k in 0..n {
        let t = t0 + span * (k as f64 / n as f64);
        let (kx1, kv1) = deriv(t, x, v);
        let (kx2, kv2) = deriv(t + 0.5 * h, x + kx1 * (0.5 * h), v + kv1 * (0.5 * h));
        let (kx3, kv3) = deriv(t + 0.5 * h, x + kx2 * (0.5 * h), v + kv2 * (0.5 * h));
        let (kx4, kv4) = deriv(t + h, x + kx3 * h, v + kv3 * h);
        x += (kx1 + (kx2 + kx3) * 2.0 + kx4) * (h / 6.0);
        v += (kv1 + (kv2 + kv3) * 2.0 + kv4) * (h / 6.0);
        settings.check_speed(v)?;
    }
    Ok(PhasePoint { x, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldSpec;
    use crate::geometry::rotate_about_axis;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn fast_flow_initial_condition() {
        let v = Vec3::new(0.3, -1.2, 0.8);
        for s in [0.0, 1.7, -4.0] {
            assert!(close(fast_flow(v, s, s, UnitAxis::e1()), v, 1e-15));
        }
    }

    #[test]
    fn fast_flow_printed_value() {
        // V(pi/2; (0,1,0), 0) = (0, 0, -1).
        let r = fast_flow(Vec3::Y, FRAC_PI_2, 0.0, UnitAxis::e1());
        assert!(close(r, Vec3::new(0.0, 0.0, -1.0), 1e-15));
    }

    #[test]
    fn fast_flow_periodic_and_matches_rotation() {
        let v = Vec3::new(1.0, 2.0, -0.5);
        let m = UnitAxis::e1();
        for tau in [0.0, 0.3, 2.2, -1.0] {
            assert!(close(
                fast_flow(v, tau + 2.0 * PI, 0.5, m),
                fast_flow(v, tau, 0.5, m),
                1e-12
            ));
            // V(0; v, tau) = u(v, tau).
            assert!(close(
                fast_flow(v, 0.0, tau, m),
                rotate_about_axis(v, tau, m),
                1e-13
            ));
        }
    }

    #[test]
    fn fast_flow_solves_the_ode() {
        // Centered difference of the flow vs V x M at pseudo-random states.
        let m = UnitAxis::new(Vec3::new(0.4, -0.2, 0.7)).unwrap();
        let v = Vec3::new(0.9, 0.4, -1.4);
        let h = 1e-6;
        for tau in [0.1, 1.0, 3.0] {
            let d = (fast_flow(v, tau + h, 0.0, m) - fast_flow(v, tau - h, 0.0, m)) * (0.5 / h);
            let rhs = fast_flow(v, tau, 0.0, m).cross(m.as_vec());
            assert!(close(d, rhs, 1e-8));
        }
    }

    #[test]
    fn drift_flow_printed_values() {
        let m = UnitAxis::e1();
        let n = UnitAxis::e2();
        let v = Vec3::new(0.7, -0.3, 1.1);
        assert!(close(fast_flow_drift(v, 1.3, 1.3, m, n).unwrap(), v, 1e-15));
        // V(0; 0, pi/2) = (0, -1, -1), the evaluation of the printed formula.
        let r = fast_flow_drift(Vec3::ZERO, 0.0, FRAC_PI_2, m, n).unwrap();
        assert!(close(r, Vec3::new(0.0, -1.0, -1.0), 1e-15));
        // 2 pi periodicity.
        let a = fast_flow_drift(v, 2.5 + 2.0 * PI, 0.4, m, n).unwrap();
        let b = fast_flow_drift(v, 2.5, 0.4, m, n).unwrap();
        assert!(close(a, b, 1e-12));
    }

    #[test]
    fn drift_flow_componentwise_formula() {
        // For M = e1, n = e2 compare against the printed components.
        let m = UnitAxis::e1();
        let n = UnitAxis::e2();
        let v = Vec3::new(0.2, 1.4, -0.6);
        for (tau, s) in [(0.7, 0.0), (2.9, 1.1), (-0.4, 0.3)] {
            let th: f64 = tau - s;
            let expect = Vec3::new(
                v.x,
                v.y * th.cos() + (v.z + 1.0) * th.sin(),
                -v.y * th.sin() + (v.z + 1.0) * th.cos() - 1.0,
            );
            let got = fast_flow_drift(v, tau, s, m, n).unwrap();
            assert!(close(got, expect, 1e-14));
        }
    }

    #[test]
    fn drift_flow_solves_the_ode() {
        let m = UnitAxis::e1();
        let n = UnitAxis::e2();
        let v = Vec3::new(0.2, 1.4, -0.6);
        let h = 1e-6;
        for tau in [0.2, 1.9] {
            let fp = fast_flow_drift(v, tau + h, 0.0, m, n).unwrap();
            let fm = fast_flow_drift(v, tau - h, 0.0, m, n).unwrap();
            let d = (fp - fm) * (0.5 / h);
            let cur = fast_flow_drift(v, tau, 0.0, m, n).unwrap();
            let rhs = n.as_vec() + cur.cross(m.as_vec());
            assert!(close(d, rhs, 1e-8));
        }
    }

    #[test]
    fn drift_flow_rejects_non_orthogonal() {
        let m = UnitAxis::e1();
        let n = UnitAxis::new(Vec3::new(0.6, 0.8, 0.0)).unwrap();
        assert!(fast_flow_drift(Vec3::ZERO, 1.0, 0.0, m, n).is_err());
    }

    fn settings_split(dt: f64) -> IntegratorSettings {
        IntegratorSettings::exact_split(dt).unwrap()
    }

    #[test]
    fn push_full_parallel_motion_is_exact() {
        let cfg = FieldConfig::magnetic(0.1, UnitAxis::e1()).unwrap();
        let p = PhasePoint::new(Vec3::new(0.5, 0.0, 0.0), Vec3::X);
        let q = push_full(p, &cfg, 0.0, 3.0, &settings_split(0.01)).unwrap();
        assert!(close(q.x, Vec3::new(3.5, 0.0, 0.0), 1e-13));
        assert!(close(q.v, Vec3::X, 1e-13));
    }

    #[test]
    fn push_full_gyration_matches_closed_form() {
        let eps = 0.1;
        let cfg = FieldConfig::magnetic(eps, UnitAxis::e1()).unwrap();
        let v0 = Vec3::Y;
        let p = PhasePoint::new(Vec3::ZERO, v0);
        let s = settings_split(0.05);
        for t in [0.04, 0.13, 2.0 * PI * eps] {
            let q = push_full(p, &cfg, 0.0, t, &s).unwrap();
            // V(t) = fast_flow(v0, t/eps, 0, e1).
            let expect = fast_flow(v0, t / eps, 0.0, UnitAxis::e1());
            assert!(close(q.v, expect, 1e-12), "t = {t}");
        }
        // After one gyroperiod the velocity returns.
        let q = push_full(p, &cfg, 0.0, 2.0 * PI * eps, &s).unwrap();
        assert!(close(q.v, v0, 1e-12));
    }

    #[test]
    fn push_full_uniform_e_parallel() {
        let cfg = FieldConfig::new(
            0.1,
            UnitAxis::e1(),
            None,
            FieldSpec::Uniform { value: Vec3::X },
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let v0 = Vec3::new(0.2, 1.0, 0.0);
        let p = PhasePoint::new(Vec3::ZERO, v0);
        let q = push_full(p, &cfg, 0.0, 1.0, &settings_split(0.01)).unwrap();
        // v1(t) = v1(0) + t exactly; perpendicular speed unchanged.
        assert!((q.v.x - (v0.x + 1.0)).abs() < 1e-12);
        let perp0 = (v0.y * v0.y + v0.z * v0.z).sqrt();
        let perp1 = (q.v.y * q.v.y + q.v.z * q.v.z).sqrt();
        assert!((perp0 - perp1).abs() < 1e-12);
    }

    #[test]
    fn push_full_backward_forward_roundtrip() {
        let cfg = FieldConfig::new(
            0.05,
            UnitAxis::e1(),
            None,
            FieldSpec::Gaussian {
                amplitude: Vec3::new(0.1, 0.05, 0.0),
                center: Vec3::ZERO,
                width: 2.0,
            },
            FieldSpec::Uniform {
                value: Vec3::new(0.05, 0.0, 0.02),
            },
            None,
        )
        .unwrap();
        let p = PhasePoint::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(0.4, 0.8, -0.1));
        let s = settings_split(0.01);
        let q = push_full(p, &cfg, 0.0, 1.0, &s).unwrap();
        let r = push_full(q, &cfg, 1.0, 0.0, &s).unwrap();
        assert!(close(r.x, p.x, 1e-10) && close(r.v, p.v, 1e-10));

        // Same property for the oracle scheme. RK4 is not time-symmetric, so
        // the roundtrip defect is twice its global error; the step must be
        // fine enough to push that below the tolerance.
        let s = IntegratorSettings::rk4(2.0 * PI * 0.05 / 2048.0, 2048).unwrap();
        let q = push_full(p, &cfg, 0.0, 0.05, &s).unwrap();
        let r = push_full(q, &cfg, 0.05, 0.0, &s).unwrap();
        assert!(close(r.x, p.x, 1e-10) && close(r.v, p.v, 1e-10));
    }

    #[test]
    fn push_full_speed_conserved_without_e() {
        let cfg = FieldConfig::new(
            0.05,
            UnitAxis::e1(),
            None,
            FieldSpec::Zero,
            FieldSpec::Uniform {
                value: Vec3::new(0.3, 0.2, 0.0),
            },
            None,
        )
        .unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::new(0.5, 1.0, -0.2));
        let mut q = p;
        let s = settings_split(0.02);
        for k in 0..50 {
            q = push_full(q, &cfg, k as f64 * 0.02, (k + 1) as f64 * 0.02, &s).unwrap();
        }
        assert!((q.v.norm() - p.v.norm()).abs() < 1e-12);
    }

    #[test]
    fn rk4_oracle_agrees_with_exact_split() {
        // Smooth weak fields, dt = 2 pi eps / 64. The dominant discrepancy is
        // the RK4 phase lag, about steps * (dt/eps)^5 / 120 per unit speed,
        // plus the O(dt^2) splitting error from the weak field; 1e-4 covers
        // both with margin at these settings.
        let eps = 0.05;
        let cfg = FieldConfig::new(
            eps,
            UnitAxis::e1(),
            None,
            FieldSpec::Gaussian {
                amplitude: Vec3::new(0.1, 0.05, 0.0),
                center: Vec3::ZERO,
                width: 2.0,
            },
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let dt = 2.0 * PI * eps / 64.0;
        let p = PhasePoint::new(Vec3::new(0.2, 0.1, 0.0), Vec3::new(0.3, 0.7, -0.2));
        let a = push_full(p, &cfg, 0.0, 1.0, &settings_split(dt)).unwrap();
        let b = push_full(p, &cfg, 0.0, 1.0, &IntegratorSettings::rk4(dt, 64).unwrap()).unwrap();
        assert!(close(a.v, b.v, 1e-4) && close(a.x, b.x, 1e-4));

        // At 256 substeps per gyroperiod the two schemes meet below 1e-6.
        let dt = 2.0 * PI * eps / 256.0;
        let a = push_full(p, &cfg, 0.0, 1.0, &settings_split(dt)).unwrap();
        let b = push_full(
            p,
            &cfg,
            0.0,
            1.0,
            &IntegratorSettings::rk4(dt, 256).unwrap(),
        )
        .unwrap();
        assert!(close(a.v, b.v, 1e-6) && close(a.x, b.x, 1e-6));
    }

    #[test]
    fn rk4_dt_validation() {
        let cfg = FieldConfig::magnetic(0.05, UnitAxis::e1()).unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::Y);
        let s = IntegratorSettings::rk4(0.1, 16).unwrap(); // far above 2 pi eps / 16
        assert!(push_full(p, &cfg, 0.0, 1.0, &s).is_err());
    }

    #[test]
    fn velocity_bound_rejects_blowup() {
        let cfg = FieldConfig::new(
            1.0,
            UnitAxis::e1(),
            None,
            FieldSpec::Uniform {
                value: Vec3::X * 10.0,
            },
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::ZERO);
        let s = settings_split(0.1).with_velocity_bound(1.0);
        assert!(matches!(
            push_full(p, &cfg, 0.0, 10.0, &s),
            Err(Error::VelocityBlowup(..))
        ));
    }

    #[test]
    fn push_limit_free_streaming() {
        let cfg = FieldConfig::magnetic(0.1, UnitAxis::e1()).unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::new(0.5, 2.0, 1.0));
        let q = push_limit(p, &cfg, 0.0, 2.0, &settings_split(0.05)).unwrap();
        assert!(close(q.x, Vec3::new(1.0, 0.0, 0.0), 1e-13));
        assert!(close(q.v, p.v, 1e-13));
    }

    #[test]
    fn push_limit_uniform_e() {
        let cfg = FieldConfig::new(
            0.1,
            UnitAxis::e1(),
            None,
            FieldSpec::Uniform { value: Vec3::X },
            FieldSpec::Zero,
            None,
        )
        .unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::new(0.5, 1.0, 0.0));
        let q = push_limit(p, &cfg, 0.0, 2.0, &settings_split(0.05)).unwrap();
        // v1 linear, x1 quadratic, everything else frozen.
        assert!((q.v.x - 2.5).abs() < 1e-12);
        assert!((q.x.x - (0.5 * 2.0 + 0.5 * 4.0)).abs() < 1e-12);
        assert!((q.v.y - 1.0).abs() < 1e-13 && q.x.y.abs() < 1e-13);
    }

    #[test]
    fn push_limit_parallel_b_rotates_at_weak_rate() {
        let b0 = 0.8;
        let cfg = FieldConfig::new(
            0.01, // eps must not matter
            UnitAxis::e1(),
            None,
            FieldSpec::Zero,
            FieldSpec::Uniform {
                value: Vec3::X * b0,
            },
            None,
        )
        .unwrap();
        let v0 = Vec3::new(0.2, 1.0, 0.0);
        let p = PhasePoint::new(Vec3::ZERO, v0);
        let t = 1.3;
        let q = push_limit(p, &cfg, 0.0, t, &settings_split(1e-3)).unwrap();
        // dV/dt = V x (b0 e1) rotates the perpendicular part at rate b0.
        let expect = fast_flow(v0, b0 * t, 0.0, UnitAxis::e1());
        assert!(close(q.v, expect, 1e-10));
        assert!((q.v.norm() - v0.norm()).abs() < 1e-12);
    }

    #[test]
    fn push_limit_drift_advection() {
        let m = UnitAxis::e1();
        let n = UnitAxis::e2();
        let cfg =
            FieldConfig::new(0.1, m, Some(n), FieldSpec::Zero, FieldSpec::Zero, None).unwrap();
        let p = PhasePoint::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.5, 0.7, -0.2));
        let q = push_limit_drift(p, &cfg, 0.0, 2.0, &settings_split(0.05)).unwrap();
        // dX/dt = (v1, 0, -1): the -e3 transport is the n x M drift.
        assert!(close(q.x, p.x + Vec3::new(2.0 * 0.5, 0.0, -2.0), 1e-12));
        assert!(close(q.v, p.v, 1e-12));
    }

    #[test]
    fn push_limit_drift_b2_accelerates_v1() {
        let m = UnitAxis::e1();
        let n = UnitAxis::e2();
        let b2 = 0.4;
        let cfg = FieldConfig::new(
            0.1,
            m,
            Some(n),
            FieldSpec::Zero,
            FieldSpec::Uniform {
                value: Vec3::Y * b2,
            },
            None,
        )
        .unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::ZERO);
        let q = push_limit_drift(p, &cfg, 0.0, 1.0, &settings_split(1e-3)).unwrap();
        // Force = (E1 - B2, 0, 0) with B1 = 0: dv1/dt = -b2.
        assert!((q.v.x + b2).abs() < 1e-10);
        assert!(q.v.y.abs() < 1e-12 && q.v.z.abs() < 1e-12);
    }

    #[test]
    fn push_limit_drift_requires_axis() {
        let cfg = FieldConfig::magnetic(0.1, UnitAxis::e1()).unwrap();
        let p = PhasePoint::new(Vec3::ZERO, Vec3::ZERO);
        assert!(push_limit_drift(p, &cfg, 0.0, 1.0, &settings_split(0.1)).is_err());
    }

    #[test]
    fn settings_validation() {
        assert!(IntegratorSettings::new(0.0, 16, Scheme::ExactSplit).is_err());
        assert!(IntegratorSettings::new(0.1, 4, Scheme::ExactSplit).is_err());
        assert!(IntegratorSettings::new(0.1, 8, Scheme::ExactSplit).is_ok());
    }
}
