//! Weak-* and two-scale convergence diagnostics, plus conservation checks.
//!
//! Pairings integrate f_eps (or its limit objects) against smooth compactly
//! supported test functions over a space-time-velocity box. The time rule for
//! anything involving f_eps resolves the fast oscillation (node spacing at
//! most one sixteenth of a gyroperiod by default); the node count therefore
//! grows like 1/eps, and a configured budget turns an unresolvable request
//! into an explicit error instead of a silently truncated quadrature.
//!
//! All reductions are chunked with a fixed shape and summed in a fixed order,
//! so reported values are bit-stable across worker counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::IntegratorSettings;
use crate::error::Error;
use crate::geometry::Vec3;
use crate::gyroaverage::GyroQuadrature;
use crate::linear_solver::{LinearProblem, Variant};
use crate::quadrature::{bump, composite_gauss_legendre, gauss_legendre_on};
use crate::vp::RhoSeries;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Gyrophase dependence of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauHarmonic {
    One,
    Cos(u32),
    Sin(u32),
}

impl TauHarmonic {
    #[inline]
    pub fn eval(self, tau: f64) -> f64 {
        match self {
            TauHarmonic::One => 1.0,
            TauHarmonic::Cos(k) => (k as f64 * tau).cos(),
            TauHarmonic::Sin(k) => (k as f64 * tau).sin(),
        }
    }

    /// Highest tau-frequency present.
    pub fn max_freq(self) -> u32 {
        match self {
            TauHarmonic::One => 0,
            TauHarmonic::Cos(k) | TauHarmonic::Sin(k) => k,
        }
    }
}

/// Separable smooth test function psi(t, tau, x, v) =
/// bump(t) * bump(x) * bump(v) * harmonic(tau), compactly supported in
/// (t, x, v) and 2-pi periodic in tau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: Vec3,
    pub x_radius: Vec3,
    pub v_center: Vec3,
    pub v_radius: Vec3,
    pub harmonic: TauHarmonic,
}

impl TestFunction {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.t_radius > 0.0
            && self.x_radius.x > 0.0
            && self.x_radius.y > 0.0
            && self.x_radius.z > 0.0
            && self.v_radius.x > 0.0
            && self.v_radius.y > 0.0
            && self.v_radius.z > 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "test function {} must have positive support radii",
                self.id
            )));
        }
        Ok(())
    }

    /// The tau-independent factor.
    #[inline]
    pub fn phi(&self, t: f64, x: Vec3, v: Vec3) -> f64 {
        self.phi_t(t) * self.phi_x(x) * self.phi_v(v)
    }

    #[inline]
    pub fn phi_t(&self, t: f64) -> f64 {
        bump((t - self.t_center) / self.t_radius)
    }

    #[inline]
    pub fn phi_x(&self, x: Vec3) -> f64 {
        bump((x.x - self.x_center.x) / self.x_radius.x)
            * bump((x.y - self.x_center.y) / self.x_radius.y)
            * bump((x.z - self.x_center.z) / self.x_radius.z)
    }

    #[inline]
    pub fn phi_v(&self, v: Vec3) -> f64 {
        bump((v.x - self.v_center.x) / self.v_radius.x)
            * bump((v.y - self.v_center.y) / self.v_radius.y)
            * bump((v.z - self.v_center.z) / self.v_radius.z)
    }

    pub fn eval(&self, t: f64, tau: f64, x: Vec3, v: Vec3) -> f64 {
        self.phi(t, x, v) * self.harmonic.eval(tau)
    }

    pub fn tau_harmonics(&self) -> u32 {
        self.harmonic.max_freq()
    }

    pub fn t_support(&self) -> [f64; 2] {
        [self.t_center - self.t_radius, self.t_center + self.t_radius]
    }

    pub fn x_support(&self) -> [[f64; 2]; 3] {
        support3(self.x_center, self.x_radius)
    }

    pub fn v_support(&self) -> [[f64; 2]; 3] {
        support3(self.v_center, self.v_radius)
    }
}

fn support3(c: Vec3, r: Vec3) -> [[f64; 2]; 3] {
    [
        [c.x - r.x, c.x + r.x],
        [c.y - r.y, c.y + r.y],
        [c.z - r.z, c.z + r.z],
    ]
}

/// Space-time test function for charge-density pairings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeTestFunction {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: Vec3,
    pub x_radius: Vec3,
}

impl SpaceTimeTestFunction {
    pub fn eval(&self, t: f64, x: Vec3) -> f64 {
        self.time_factor(t) * self.space_factor(x)
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        bump((t - self.t_center) / self.t_radius)
    }

    pub fn space_factor(&self, x: Vec3) -> f64 {
        bump((x.x - self.x_center.x) / self.x_radius.x)
            * bump((x.y - self.x_center.y) / self.x_radius.y)
            * bump((x.z - self.x_center.z) / self.x_radius.z)
    }
}

/// Node counts and step sizes for the diagnostic quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    /// Base number of time nodes for non-oscillatory integrands.
    pub t_nodes: usize,
    /// Gauss-Legendre nodes per spatial axis.
    pub x_nodes: usize,
    /// Gauss-Legendre nodes per velocity axis.
    pub v_nodes: usize,
    /// Gyrophase nodes for averages and profile reconstruction.
    pub gyro_nodes: usize,
    /// Time nodes per gyroperiod required to resolve oscillating integrands.
    pub oscillation_nodes_per_period: usize,
    /// Hard cap on integrand evaluations per pairing.
    pub max_nodes: u64,
    /// Substep for finite-epsilon pushes with nonzero weak fields.
    pub full_dt: f64,
    /// Substep for limit-system pushes.
    pub limit_dt: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            t_nodes: 48,
            x_nodes: 24,
            v_nodes: 24,
            gyro_nodes: 64,
            oscillation_nodes_per_period: 16,
            max_nodes: 8_000_000_000,
            full_dt: 0.02,
            limit_dt: 0.02,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.t_nodes == 0 || self.x_nodes == 0 || self.v_nodes == 0 {
            return Err(Error::InvalidConfig(
                "quadrature node counts must be positive".into(),
            ));
        }
        if self.gyro_nodes < 4 {
            return Err(Error::InvalidConfig("gyro_nodes must be at least 4".into()));
        }
        if self.oscillation_nodes_per_period < 4 {
            return Err(Error::InvalidConfig(
                "oscillation_nodes_per_period must be at least 4".into(),
            ));
        }
        if !(self.full_dt > 0.0) || !(self.limit_dt > 0.0) {
            return Err(Error::InvalidConfig(
                "quadrature substeps must be positive".into(),
            ));
        }
        Ok(())
    }

    fn gyro(&self) -> GyroQuadrature {
        GyroQuadrature::new(self.gyro_nodes).expect("validated")
    }

    fn full_settings(&self) -> IntegratorSettings {
        IntegratorSettings::exact_split(self.full_dt).expect("validated")
    }

    fn limit_settings(&self) -> IntegratorSettings {
        IntegratorSettings::exact_split(self.limit_dt).expect("validated")
    }

    /// Composite Gauss-Legendre time rule on [t_lo, t_hi]: 8-node panels, at
    /// least t_nodes total, panels no wider than half a gyroperiod (so the
    /// average node spacing stays below gyroperiod / nodes_per_period), and
    /// geometrically graded panels toward both ends, where the bump envelope
    /// has its essential singularity and uniform panels converge slowly.
    fn time_rule(&self, t_lo: f64, t_hi: f64, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
        const PER_PANEL: usize = 8;
        const GRADE_LEVELS: usize = 4;
        let span = t_hi - t_lo;
        let base_panels = self.t_nodes.div_ceil(PER_PANEL).max(1);
        let osc_panels = (span * self.oscillation_nodes_per_period as f64
            / (PER_PANEL as f64 * TWO_PI * epsilon))
            .ceil() as usize;
        let n_panels = base_panels.max(osc_panels.max(1));
        let w = span / n_panels as f64;

        // Uniform boundaries plus halving ladders inside the two edge panels.
        let mut bounds: Vec<f64> = (0..=n_panels).map(|k| t_lo + w * k as f64).collect();
        for j in 1..=GRADE_LEVELS {
            let d = w / (1u64 << j) as f64;
            bounds.push(t_lo + d);
            bounds.push(t_hi - d);
        }
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bounds.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * span);

        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in bounds.windows(2) {
            let (xs, ws) = gauss_legendre_on(PER_PANEL, pair[0], pair[1]);
            nodes.extend(xs);
            weights.extend(ws);
        }
        (nodes, weights)
    }

    fn check_budget(&self, needed: u64) -> Result<(), Error> {
        if needed > self.max_nodes {
            return Err(Error::NodeBudgetExceeded {
                needed,
                budget: self.max_nodes,
            });
        }
        Ok(())
    }

    /// Integrand evaluations per (t, v) job for one spatial sweep, given
    /// whether the hoisted (uniform weak field, separable spatial profile)
    /// path applies.
    fn x_cost(&self, hoisted: bool) -> u64 {
        if hoisted {
            3 * self.x_nodes as u64
        } else {
            (self.x_nodes as u64).pow(3)
        }
    }
}

fn hoisted_path(prob: &LinearProblem) -> bool {
    prob.cfg().weak_fields_uniform_in_x() && prob.f0().spatial.separable()
}

/// Two sides of one pairing at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub epsilon: f64,
    pub value: f64,
    pub reference: f64,
    pub abs_error: f64,
}

impl PairingResult {
    pub fn new(epsilon: f64, value: f64, reference: f64) -> Self {
        PairingResult {
            epsilon,
            value,
            reference,
            abs_error: (value - reference).abs(),
        }
    }
}

/// Pairing value plus the quadrature resolution that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingDetail {
    pub result: PairingResult,
    pub nodes_t: usize,
    pub nodes_x: usize,
    pub nodes_v: usize,
}

// ---------------------------------------------------------------------------
// tensor quadrature grids
// ---------------------------------------------------------------------------

struct TensorGrid {
    nodes: Vec<Vec3>,
    /// Quadrature weight times the test-function factor at each node.
    wphi: Vec<f64>,
}

fn build_grid(box3: [[f64; 2]; 3], n: usize, phi: impl Fn(Vec3) -> f64) -> TensorGrid {
    let (x1, w1) = gauss_legendre_on(n, box3[0][0], box3[0][1]);
    let (x2, w2) = gauss_legendre_on(n, box3[1][0], box3[1][1]);
    let (x3, w3) = gauss_legendre_on(n, box3[2][0], box3[2][1]);
    let mut nodes = Vec::with_capacity(n * n * n);
    let mut wphi = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = Vec3::new(x1[i], x2[j], x3[k]);
                nodes.push(p);
                wphi.push(w1[i] * w2[j] * w3[k] * phi(p));
            }
        }
    }
    TensorGrid { nodes, wphi }
}

/// Spatial quadrature grid carrying both the per-axis factorization (weight
/// times the per-axis bump factor) and the flattened tensor form.
struct XGrid {
    axis_nodes: [Vec<f64>; 3],
    axis_wb: [Vec<f64>; 3],
    flat: TensorGrid,
}

fn build_xgrid(tf: &TestFunction, n: usize) -> XGrid {
    let box3 = tf.x_support();
    let centers = tf.x_center.to_array();
    let radii = tf.x_radius.to_array();
    let mut axis_nodes: [Vec<f64>; 3] = Default::default();
    let mut axis_wb: [Vec<f64>; 3] = Default::default();
    for d in 0..3 {
        let (xs, ws) = gauss_legendre_on(n, box3[d][0], box3[d][1]);
        axis_wb[d] = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| w * bump((x - centers[d]) / radii[d]))
            .collect();
        axis_nodes[d] = xs;
    }
    let mut nodes = Vec::with_capacity(n * n * n);
    let mut wphi = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                nodes.push(Vec3::new(
                    axis_nodes[0][i],
                    axis_nodes[1][j],
                    axis_nodes[2][k],
                ));
                wphi.push(axis_wb[0][i] * axis_wb[1][j] * axis_wb[2][k]);
            }
        }
    }
    XGrid {
        axis_nodes,
        axis_wb,
        flat: TensorGrid { nodes, wphi },
    }
}

/// Integral of phi_x(x) spatial(x + shift) dx over the grid. Products of 1d
/// sums when the spatial profile is separable, flattened tensor sum otherwise.
fn spatial_sum(xg: &XGrid, spatial: &crate::profiles::Profile, shift: Vec3) -> f64 {
    if spatial.separable() {
        let sh = shift.to_array();
        let mut prod = 1.0;
        for d in 0..3 {
            let mut s = 0.0;
            for (x, wb) in xg.axis_nodes[d].iter().zip(&xg.axis_wb[d]) {
                s += wb * spatial.eval_axis(d, x + sh[d]);
            }
            prod *= s;
        }
        prod
    } else {
        xg.flat
            .nodes
            .iter()
            .zip(&xg.flat.wphi)
            .map(|(x, w)| w * spatial.eval(*x + shift))
            .sum()
    }
}

/// Fixed-shape deterministic reduction: values are produced per job in index
/// order and summed pairwise, so the result is independent of thread count.
fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}

// ---------------------------------------------------------------------------
// pairing integrals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum FlowSide {
    FiniteEps,
    Limit,
}

/// Integral of side(t,x,v) * phi(t,x,v) * [harm(t/eps)] over the support box.
///
/// When the weak fields are uniform in x, the backward foot from (x, v) is
/// (x + shift(t, v), v0(t, v)) with a v-only shift, so the expensive push and
/// the velocity factor hoist out of the x loop. Otherwise every 6d node is
/// pushed individually (same reduction shape, just slower).
fn pairing_integral(
    prob: &LinearProblem,
    tf: &TestFunction,
    quad: &QuadSpec,
    trule: &(Vec<f64>, Vec<f64>),
    side: FlowSide,
    lhs_harmonic: bool,
) -> Result<f64, Error> {
    let (t_nodes, t_weights) = trule;
    if t_nodes.is_empty() {
        return Ok(0.0);
    }

    let xg = build_xgrid(tf, quad.x_nodes);
    let vg = build_grid(tf.v_support(), quad.v_nodes, |p| tf.phi_v(p));

    let uniform = prob.cfg().weak_fields_uniform_in_x();
    let eps = prob.cfg().epsilon();
    let gyro = quad.gyro();
    let settings = match side {
        FlowSide::FiniteEps => quad.full_settings(),
        FlowSide::Limit => quad.limit_settings(),
    };
    let axis = prob.cfg().axis();
    let drift = match prob.variant() {
        Variant::MagneticOnly => None,
        Variant::MagneticPlusDrift => prob.cfg().drift_axis(),
    };
    let f0 = prob.f0();

    let n_jobs = t_nodes.len() * vg.nodes.len();
    let partials: Result<Vec<f64>, Error> = (0..n_jobs)
        .into_par_iter()
        .map(|job| {
            let it = job / vg.nodes.len();
            let jv = job % vg.nodes.len();
            let t = t_nodes[it];
            let wv = vg.wphi[jv];
            if wv == 0.0 {
                return Ok(0.0);
            }
            let v = vg.nodes[jv];
            let tfac = t_weights[it]
                * tf.phi_t(t)
                * if lhs_harmonic {
                    tf.harmonic.eval(t / eps)
                } else {
                    1.0
                };
            if tfac == 0.0 {
                return Ok(0.0);
            }
            let mut acc = 0.0;
            if uniform {
                let foot = match side {
                    FlowSide::FiniteEps => prob.backward_full(t, Vec3::ZERO, v, &settings)?,
                    FlowSide::Limit => prob.backward_limit(t, Vec3::ZERO, v, &settings)?,
                };
                let vel_factor = match side {
                    FlowSide::FiniteEps => f0.velocity.eval(foot.v),
                    FlowSide::Limit => f0.velocity_gyroaverage(foot.v, axis, drift, gyro),
                };
                if vel_factor != 0.0 {
                    acc = spatial_sum(&xg, &f0.spatial, foot.x) * vel_factor;
                }
            } else {
                for (x, wx) in xg.flat.nodes.iter().zip(&xg.flat.wphi) {
                    if *wx == 0.0 {
                        continue;
                    }
                    let val = match side {
                        FlowSide::FiniteEps => {
                            let foot = prob.backward_full(t, *x, v, &settings)?;
                            f0.eval(foot.x, foot.v)
                        }
                        FlowSide::Limit => {
                            let foot = prob.backward_limit(t, *x, v, &settings)?;
                            f0.eval_limit(foot.x, foot.v, axis, drift, gyro)
                        }
                    };
                    acc += wx * val;
                }
            }
            Ok(acc * tfac * wv)
        })
        .collect();
    Ok(tree_sum(&partials?))
}

/// Integral of (integral over tau of F psi) over the support box: the
/// reference side of a two-scale pairing.
fn profile_integral(
    prob: &LinearProblem,
    tf: &TestFunction,
    quad: &QuadSpec,
    trule: &(Vec<f64>, Vec<f64>),
) -> Result<f64, Error> {
    let (t_nodes, t_weights) = trule;
    if t_nodes.is_empty() {
        return Ok(0.0);
    }
    let xg = build_xgrid(tf, quad.x_nodes);
    let vg = build_grid(tf.v_support(), quad.v_nodes, |p| tf.phi_v(p));

    let uniform = prob.cfg().weak_fields_uniform_in_x();
    let gyro = quad.gyro();
    let settings = quad.limit_settings();
    let f0 = prob.f0();
    let taus: Vec<f64> = gyro.taus().collect();
    let tau_w = gyro.weight();

    let n_jobs = t_nodes.len() * vg.nodes.len();
    let partials: Result<Vec<f64>, Error> = (0..n_jobs)
        .into_par_iter()
        .map(|job| {
            let it = job / vg.nodes.len();
            let jv = job % vg.nodes.len();
            let t = t_nodes[it];
            let wv = vg.wphi[jv];
            if wv == 0.0 {
                return Ok(0.0);
            }
            let v = vg.nodes[jv];
            let tfac = t_weights[it] * tf.phi_t(t);
            if tfac == 0.0 {
                return Ok(0.0);
            }
            let mut acc = 0.0;
            if uniform {
                // Backward foot of (., v); the x shift is shared by every
                // gyrophase of v because rotation preserves the parallel part.
                let foot = prob.backward_limit(t, Vec3::ZERO, v, &settings)?;
                let mut hsum = 0.0;
                for &tau in &taus {
                    hsum += tf.harmonic.eval(tau) * f0.velocity.eval(prob.rotation(foot.v, tau));
                }
                hsum *= tau_w / TWO_PI;
                if hsum != 0.0 {
                    acc = spatial_sum(&xg, &f0.spatial, foot.x) * hsum;
                }
            } else {
                for (x, wx) in xg.flat.nodes.iter().zip(&xg.flat.wphi) {
                    if *wx == 0.0 {
                        continue;
                    }
                    let mut hsum = 0.0;
                    for &tau in &taus {
                        let u = prob.rotation(v, tau);
                        let foot = prob.backward_limit(t, *x, u, &settings)?;
                        hsum += tf.harmonic.eval(tau) * f0.eval(foot.x, foot.v) / TWO_PI;
                    }
                    acc += wx * hsum * tau_w;
                }
            }
            Ok(acc * tfac * wv)
        })
        .collect();
    Ok(tree_sum(&partials?))
}

/// Weak-* pairing: integral of f_eps phi against the integral of f phi, over
/// the support of a tau-independent test function.
pub fn pair_weak(
    prob: &LinearProblem,
    phi: &TestFunction,
    quad: &QuadSpec,
) -> Result<PairingDetail, Error> {
    phi.validate()?;
    quad.validate()?;
    if phi.tau_harmonics() != 0 {
        return Err(Error::InvalidConfig(format!(
            "pair_weak requires a tau-independent test function, {} has harmonics",
            phi.id
        )));
    }
    let t_lo = phi.t_support()[0].max(0.0);
    let t_hi = phi.t_support()[1].min(prob.horizon());
    let trule = if t_hi > t_lo {
        quad.time_rule(t_lo, t_hi, prob.cfg().epsilon())
    } else {
        (Vec::new(), Vec::new())
    };
    let n_t = trule.0.len();
    let uniform = prob.cfg().weak_fields_uniform_in_x();
    let jobs = n_t as u64 * (quad.v_nodes as u64).pow(3);
    let x_cost = if uniform {
        quad.x_cost(hoisted_path(prob))
    } else {
        (quad.x_nodes as u64).pow(3)
    };
    let finite_cost = jobs * x_cost;
    let limit_cost = if uniform {
        jobs * (x_cost + quad.gyro_nodes as u64)
    } else {
        jobs * x_cost * quad.gyro_nodes as u64
    };
    quad.check_budget(finite_cost + limit_cost)?;

    // A frequency-zero harmonic is a constant factor.
    let harm = phi.harmonic.eval(0.0);
    let lhs = harm * pairing_integral(prob, phi, quad, &trule, FlowSide::FiniteEps, false)?;
    let rhs = harm * pairing_integral(prob, phi, quad, &trule, FlowSide::Limit, false)?;
    Ok(PairingDetail {
        result: PairingResult::new(prob.cfg().epsilon(), lhs, rhs),
        nodes_t: n_t,
        nodes_x: quad.x_nodes,
        nodes_v: quad.v_nodes,
    })
}

/// Two-scale pairing: integral of f_eps psi(t, t/eps) against the
/// tau-integrated profile pairing.
pub fn pair_twoscale(
    prob: &LinearProblem,
    psi: &TestFunction,
    quad: &QuadSpec,
) -> Result<PairingDetail, Error> {
    psi.validate()?;
    quad.validate()?;
    if 2 * psi.tau_harmonics() as usize >= quad.gyro_nodes {
        return Err(Error::InvalidConfig(format!(
            "gyro_nodes = {} cannot resolve harmonic {} of {}",
            quad.gyro_nodes,
            psi.tau_harmonics(),
            psi.id
        )));
    }
    let t_lo = psi.t_support()[0].max(0.0);
    let t_hi = psi.t_support()[1].min(prob.horizon());
    let trule = if t_hi > t_lo {
        quad.time_rule(t_lo, t_hi, prob.cfg().epsilon())
    } else {
        (Vec::new(), Vec::new())
    };
    let n_t = trule.0.len();
    let uniform = prob.cfg().weak_fields_uniform_in_x();
    let jobs = n_t as u64 * (quad.v_nodes as u64).pow(3);
    let x_cost = if uniform {
        quad.x_cost(hoisted_path(prob))
    } else {
        (quad.x_nodes as u64).pow(3)
    };
    let finite_cost = jobs * x_cost;
    let profile_cost = if uniform {
        jobs * (x_cost + quad.gyro_nodes as u64)
    } else {
        jobs * x_cost * quad.gyro_nodes as u64
    };
    quad.check_budget(finite_cost + profile_cost)?;

    let lhs = pairing_integral(prob, psi, quad, &trule, FlowSide::FiniteEps, true)?;
    let rhs = profile_integral(prob, psi, quad, &trule)?;
    Ok(PairingDetail {
        result: PairingResult::new(prob.cfg().epsilon(), lhs, rhs),
        nodes_t: n_t,
        nodes_x: quad.x_nodes,
        nodes_v: quad.v_nodes,
    })
}

/// Quadrature L2 norm squared of f_eps at time t, over a fixed box chosen at
/// the horizon so every queried time shares the same quadrature geometry.
///
/// Transport can inflate the support box far beyond the initial one, so the
/// spatial and velocity rules are composite Gauss-Legendre with panel widths
/// tied to the initial support: resolution per unit length stays what
/// `x_nodes` / `v_nodes` deliver at time zero no matter how large the box.
pub fn l2_norm_f(prob: &LinearProblem, t: f64, quad: &QuadSpec) -> Result<f64, Error> {
    quad.validate()?;
    let (xbox, vbox) = prob.support_box_at_horizon();
    let f0 = prob.f0();

    let x0 = f0.spatial.support_box();
    let v0 = f0.velocity.support_box();
    let panel_x: Vec<f64> = (0..3).map(|d| 0.5 * (x0[d][1] - x0[d][0])).collect();
    let panel_v: Vec<f64> = (0..3).map(|d| 0.5 * (v0[d][1] - v0[d][0])).collect();

    let mut x_axes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(3);
    let mut v_axes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(3);
    for d in 0..3 {
        x_axes.push(composite_gauss_legendre(
            quad.x_nodes,
            panel_x[d],
            xbox[d][0],
            xbox[d][1],
        ));
        v_axes.push(composite_gauss_legendre(
            quad.v_nodes,
            panel_v[d],
            vbox[d][0],
            vbox[d][1],
        ));
    }

    let settings = quad.full_settings();
    let uniform = prob.cfg().weak_fields_uniform_in_x();
    let separable = f0.spatial.separable();

    let nvals: Vec<usize> = v_axes.iter().map(|(xs, _)| xs.len()).collect();
    let n_vjobs = nvals[0] * nvals[1] * nvals[2];
    let x_count: usize = x_axes.iter().map(|(xs, _)| xs.len()).product();
    let x_cost = if uniform && separable {
        x_axes.iter().map(|(xs, _)| xs.len() as u64).sum::<u64>()
    } else {
        x_count as u64
    };
    quad.check_budget(x_cost * n_vjobs as u64)?;

    let partials: Result<Vec<f64>, Error> = (0..n_vjobs)
        .into_par_iter()
        .map(|jv| {
            let k3 = jv % nvals[2];
            let k2 = (jv / nvals[2]) % nvals[1];
            let k1 = jv / (nvals[1] * nvals[2]);
            let v = Vec3::new(v_axes[0].0[k1], v_axes[1].0[k2], v_axes[2].0[k3]);
            let wv = v_axes[0].1[k1] * v_axes[1].1[k2] * v_axes[2].1[k3];
            let mut acc = 0.0;
            if uniform {
                let foot = prob.backward_full(t, Vec3::ZERO, v, &settings)?;
                let vel = f0.velocity.eval(foot.v);
                if vel != 0.0 {
                    if separable {
                        let sh = foot.x.to_array();
                        acc = 1.0;
                        for (d, (xs, ws)) in x_axes.iter().enumerate() {
                            let mut s = 0.0;
                            for (x, w) in xs.iter().zip(ws.iter()) {
                                let g = f0.spatial.eval_axis(d, x + sh[d]);
                                s += w * g * g;
                            }
                            acc *= s;
                        }
                    } else {
                        for i in 0..x_axes[0].0.len() {
                            for j in 0..x_axes[1].0.len() {
                                let w12 = x_axes[0].1[i] * x_axes[1].1[j];
                                for k in 0..x_axes[2].0.len() {
                                    let x =
                                        Vec3::new(x_axes[0].0[i], x_axes[1].0[j], x_axes[2].0[k])
                                            + foot.x;
                                    let s = f0.spatial.eval(x);
                                    acc += w12 * x_axes[2].1[k] * s * s;
                                }
                            }
                        }
                    }
                    acc *= vel * vel;
                }
            } else {
                for i in 0..x_axes[0].0.len() {
                    for j in 0..x_axes[1].0.len() {
                        for k in 0..x_axes[2].0.len() {
                            let x = Vec3::new(x_axes[0].0[i], x_axes[1].0[j], x_axes[2].0[k]);
                            let foot = prob.backward_full(t, x, v, &settings)?;
                            let f = f0.eval(foot.x, foot.v);
                            acc += x_axes[0].1[i] * x_axes[1].1[j] * x_axes[2].1[k] * f * f;
                        }
                    }
                }
            }
            Ok(acc * wv)
        })
        .collect();
    Ok(tree_sum(&partials?))
}

// ---------------------------------------------------------------------------
// sweep orchestration
// ---------------------------------------------------------------------------

/// One pairing at one scale, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub test_id: String,
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub nodes_t: usize,
    pub nodes_x: usize,
    pub nodes_v: usize,
    pub seconds: f64,
}

/// Full sweep output: one row per (test function, epsilon).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// CSV with mandatory header; real values in scientific notation with 17
    /// significant digits. Timing is zeroed unless explicitly requested so
    /// that outputs are byte-reproducible.
    pub fn to_csv(&self, include_timings: bool) -> String {
        let mut out =
            String::from("test_id,epsilon,lhs,rhs,abs_error,nodes_t,nodes_x,nodes_v,seconds\n");
        for r in &self.rows {
            let secs = if include_timings { r.seconds } else { 0.0 };
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{:.16e}\n",
                r.test_id,
                r.epsilon,
                r.lhs,
                r.rhs,
                r.abs_error,
                r.nodes_t,
                r.nodes_x,
                r.nodes_v,
                secs
            ));
        }
        out
    }

    /// Per test: is abs_error nonincreasing along the sweep's epsilon order?
    pub fn monotone_flags(&self) -> Vec<(String, bool)> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.test_id) {
                ids.push(r.test_id.clone());
            }
        }
        ids.into_iter()
            .map(|id| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.test_id == id)
                    .map(|r| r.abs_error)
                    .collect();
                let mono = errs.windows(2).all(|w| w[1] <= w[0]);
                (id, mono)
            })
            .collect()
    }

    /// Per test: abs_error(last epsilon) / abs_error(first epsilon).
    pub fn final_over_initial(&self) -> Vec<(String, f64)> {
        self.monotone_flags()
            .into_iter()
            .map(|(id, _)| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.test_id == id)
                    .map(|r| r.abs_error)
                    .collect();
                let ratio = if errs.is_empty() || errs[0] == 0.0 {
                    0.0
                } else {
                    errs[errs.len() - 1] / errs[0]
                };
                (id, ratio)
            })
            .collect()
    }
}

/// Run every test function at every scale in `eps_list` (which must be
/// strictly decreasing) and collect pairing rows.
pub fn convergence_sweep(
    prob: &LinearProblem,
    tests: &[TestFunction],
    eps_list: &[f64],
    quad: &QuadSpec,
) -> Result<SweepReport, Error> {
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig(
            "epsilon list must not be empty".into(),
        ));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidConfig(
            "epsilon values must be positive".into(),
        ));
    }
    let mut rows = Vec::with_capacity(tests.len() * eps_list.len());
    for tf in tests {
        for &eps in eps_list {
            let p = prob.with_epsilon(eps)?;
            let start = std::time::Instant::now();
            let detail = if tf.tau_harmonics() == 0 {
                pair_weak(&p, tf, quad)?
            } else {
                pair_twoscale(&p, tf, quad)?
            };
            rows.push(SweepRow {
                test_id: tf.id.clone(),
                epsilon: eps,
                lhs: detail.result.value,
                rhs: detail.result.reference,
                abs_error: detail.result.abs_error,
                nodes_t: detail.nodes_t,
                nodes_x: detail.nodes_x,
                nodes_v: detail.nodes_v,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SweepReport { rows })
}

/// One row of the rho tau-independence report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoTauRow {
    pub epsilon: f64,
    pub pairing: f64,
    pub abs_pairing: f64,
    pub t_samples: usize,
}

/// Oscillatory pairing of a recorded charge-density series against
/// cos(t / eps) phi(t, x). The sampled series must resolve the gyroperiod
/// with at least 16 samples.
pub fn rho_tau_independence(
    series: &[(f64, RhoSeries)],
    phi: &SpaceTimeTestFunction,
) -> Result<Vec<RhoTauRow>, Error> {
    let mut rows = Vec::with_capacity(series.len());
    for (eps, s) in series {
        if s.times.len() < 2 {
            return Err(Error::InvalidConfig(
                "rho series needs at least two samples".into(),
            ));
        }
        let dt = s.times[1] - s.times[0];
        let period = TWO_PI * eps;
        if dt > period / 16.0 * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "rho series sampling rate {:.3e} is below 16 per gyroperiod at eps = {eps}",
                period / dt
            )));
        }
        let cell = s.grid.cell_volume();
        let mut acc = 0.0;
        for (i, (&t, rho)) in s.times.iter().zip(&s.rho).enumerate() {
            // Trapezoid in t over the uniformly sampled series.
            let wt = if i == 0 || i == s.times.len() - 1 {
                0.5 * dt
            } else {
                dt
            };
            let osc = (t / eps).cos();
            let tphi = wt * osc;
            if tphi == 0.0 {
                continue;
            }
            let mut space = 0.0;
            for (idx, r) in rho.iter().enumerate() {
                let x = s.grid.node_position(idx);
                space += r * phi.eval(t, x);
            }
            acc += tphi * space * cell;
        }
        rows.push(RhoTauRow {
            epsilon: *eps,
            pairing: acc,
            abs_pairing: acc.abs(),
            t_samples: s.times.len(),
        });
    }
    Ok(rows)
}

/// CSV for the rho tau-independence rows.
pub fn rho_tau_to_csv(rows: &[RhoTauRow]) -> String {
    let mut out = String::from("epsilon,pairing,abs_pairing,t_samples\n");
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{}\n",
            r.epsilon, r.pairing, r.abs_pairing, r.t_samples
        ));
    }
    out
}

/// The default diagnostic suite: three tau-independent test functions and
/// three oscillatory ones isolating the first and second gyro-harmonics.
///
/// The time window fills most of the horizon: the residual of an oscillatory
/// pairing carries a term proportional to the Fourier transform of the time
/// envelope at frequency 1/eps, and a wide window is what suppresses it below
/// the physical O(eps) error on the desk-scale epsilon list.
pub fn default_test_suite(horizon: f64) -> Vec<TestFunction> {
    let mid = 0.5 * horizon;
    let base = TestFunction {
        id: String::new(),
        t_center: mid,
        t_radius: 0.95 * mid,
        x_center: Vec3::ZERO,
        x_radius: Vec3::new(2.0, 2.0, 2.0),
        v_center: Vec3::ZERO,
        v_radius: Vec3::new(2.5, 2.5, 2.5),
        harmonic: TauHarmonic::One,
    };
    let mut suite = Vec::new();
    suite.push(TestFunction {
        id: "weak_a".into(),
        ..base.clone()
    });
    suite.push(TestFunction {
        id: "weak_b".into(),
        x_center: Vec3::new(0.4, 0.0, 0.0),
        v_center: Vec3::new(0.0, 0.4, 0.0),
        ..base.clone()
    });
    suite.push(TestFunction {
        id: "weak_c".into(),
        t_radius: 0.6 * mid,
        x_radius: Vec3::new(1.5, 1.5, 1.5),
        ..base.clone()
    });
    // The oscillatory tests must not be reflection- or quarter-turn-symmetric
    // in the perpendicular velocity plane, or the gyro-harmonic pairings
    // vanish identically and the comparison degenerates to 0 = 0. A tight
    // on-axis spatial window strengthens the O(eps) Larmor-gradient term that
    // the convergence measurement rides on.
    let osc = TestFunction {
        x_center: Vec3::new(0.3, 0.0, 0.0),
        x_radius: Vec3::new(1.2, 1.2, 1.2),
        ..base.clone()
    };
    suite.push(TestFunction {
        id: "cos_tau".into(),
        harmonic: TauHarmonic::Cos(1),
        v_center: Vec3::new(0.0, 0.5, 0.25),
        v_radius: Vec3::new(2.5, 2.1, 2.0),
        ..osc.clone()
    });
    suite.push(TestFunction {
        id: "sin_tau".into(),
        harmonic: TauHarmonic::Sin(1),
        v_center: Vec3::new(0.0, 0.25, -0.3),
        v_radius: Vec3::new(2.5, 2.2, 2.4),
        ..osc.clone()
    });
    suite.push(TestFunction {
        id: "cos_2tau".into(),
        harmonic: TauHarmonic::Cos(2),
        v_center: Vec3::new(0.0, 0.3, 0.15),
        v_radius: Vec3::new(2.5, 2.4, 1.9),
        ..osc
    });
    suite
}
