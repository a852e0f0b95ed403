//! Experiment configuration: one TOML file describes a whole run. Every
//! field has a stated default, all randomness flows from the single `seed`,
//! and loading then serializing then loading again is the identity.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use ghl_core::gyroaverage::GyroQuadrature;
use ghl_core::linear_solver::{LinearProblem, Variant};
use ghl_core::poisson::Grid3;
use ghl_core::twoscale::{default_test_suite, QuadSpec, SpaceTimeTestFunction, TestFunction};
use ghl_core::vp::{VpConfig, VpMode};
use ghl_core::{FieldConfig, FieldSpec, InitialData, Profile, UnitAxis, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinearSweep,
    DriftDemo,
    VpRun,
    VpCompare,
    Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSection {
    pub variant: Variant,
    pub horizon: f64,
    pub epsilons: Vec<f64>,
    pub axis: Vec3,
    pub drift_axis: Option<Vec3>,
    pub e_weak: FieldSpec,
    pub b_weak: FieldSpec,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            variant: Variant::MagneticOnly,
            horizon: 2.0,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            axis: Vec3::X,
            drift_axis: None,
            e_weak: FieldSpec::Zero,
            b_weak: FieldSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSection {
    pub spatial: Profile,
    pub velocity: Profile,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            spatial: Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::ZERO,
                sigma: 0.5,
            },
            velocity: Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::new(0.0, 0.5, 0.0),
                sigma: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestsSection {
    /// "default" uses the built-in six-function suite; "custom" reads
    /// `functions`.
    pub suite: String,
    pub functions: Vec<TestFunction>,
}

impl Default for TestsSection {
    fn default() -> Self {
        TestsSection {
            suite: "default".into(),
            functions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpSection {
    pub cells: [usize; 3],
    pub lengths: [f64; 3],
    pub particles: usize,
    pub dt_macro: f64,
    /// Minimum substep count; raised automatically when an epsilon needs more.
    pub substeps: usize,
    pub horizon: f64,
    pub mode: VpMode,
    pub snapshot_every: usize,
    pub velocity_bound: f64,
    /// Initial data used by PIC runs (defaults to a box-centered blob).
    pub spatial: Profile,
    pub velocity: Profile,
}

impl Default for VpSection {
    fn default() -> Self {
        VpSection {
            cells: [16, 16, 16],
            lengths: [1.0, 1.0, 1.0],
            particles: 100_000,
            dt_macro: 0.02,
            substeps: 4,
            horizon: 1.0,
            mode: VpMode::FiniteEps,
            snapshot_every: 10,
            velocity_bound: 1e6,
            spatial: Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::new(0.5, 0.5, 0.5),
                sigma: 0.08,
            },
            velocity: Profile::Gaussian {
                amplitude: 1.0,
                center: Vec3::ZERO,
                sigma: 0.35,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhoTauSection {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_center: Vec3,
    pub x_radius: Vec3,
}

impl Default for RhoTauSection {
    fn default() -> Self {
        RhoTauSection {
            t_center: 0.5,
            t_radius: 0.45,
            x_center: Vec3::new(0.5, 0.5, 0.5),
            x_radius: Vec3::new(0.45, 0.45, 0.45),
        }
    }
}

/// The whole experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// 0 = use all cores.
    pub workers: usize,
    pub problem: ProblemSection,
    pub initial_data: InitialSection,
    pub quadrature: QuadSpec,
    pub tests: TestsSection,
    pub vp: VpSection,
    pub rho_tau: RhoTauSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::LinearSweep,
            seed: 42,
            workers: 0,
            problem: ProblemSection::default(),
            initial_data: InitialSection::default(),
            quadrature: QuadSpec::default(),
            tests: TestsSection::default(),
            vp: VpSection::default(),
            rho_tau: RhoTauSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).context("failed to parse experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.problem.epsilons.is_empty() {
            bail!("problem.epsilons must not be empty");
        }
        if self.problem.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            bail!("problem.epsilons must be strictly decreasing");
        }
        if self.problem.epsilons.iter().any(|e| !(*e > 0.0)) {
            bail!("problem.epsilons must be positive");
        }
        if !(self.problem.horizon > 0.0) {
            bail!("problem.horizon must be positive");
        }
        self.quadrature
            .validate()
            .map_err(|e| anyhow::anyhow!("quadrature: {e}"))?;
        self.initial_data
            .spatial
            .validate()
            .map_err(|e| anyhow::anyhow!("initial_data.spatial: {e}"))?;
        self.initial_data
            .velocity
            .validate()
            .map_err(|e| anyhow::anyhow!("initial_data.velocity: {e}"))?;
        self.vp
            .spatial
            .validate()
            .map_err(|e| anyhow::anyhow!("vp.spatial: {e}"))?;
        self.vp
            .velocity
            .validate()
            .map_err(|e| anyhow::anyhow!("vp.velocity: {e}"))?;
        if self.tests.suite != "default" && self.tests.suite != "custom" {
            bail!("tests.suite must be \"default\" or \"custom\"");
        }
        if self.tests.suite == "custom" && self.tests.functions.is_empty() {
            bail!("tests.suite = \"custom\" requires at least one [[tests.functions]] entry");
        }
        for tf in &self.tests.functions {
            tf.validate()
                .map_err(|e| anyhow::anyhow!("tests.functions: {e}"))?;
        }
        // Field and axis invariants are enforced by the constructors.
        self.field_config(self.problem.epsilons[0])?;
        Ok(())
    }

    pub fn axis(&self) -> anyhow::Result<UnitAxis> {
        UnitAxis::new(self.problem.axis).map_err(|e| anyhow::anyhow!("problem.axis: {e}"))
    }

    pub fn drift_axis(&self) -> anyhow::Result<Option<UnitAxis>> {
        match (self.problem.drift_axis, self.problem.variant) {
            (Some(v), _) => Ok(Some(
                UnitAxis::new(v).map_err(|e| anyhow::anyhow!("problem.drift_axis: {e}"))?,
            )),
            (None, Variant::MagneticPlusDrift) => {
                bail!("variant = magnetic_plus_drift requires problem.drift_axis")
            }
            (None, Variant::MagneticOnly) => Ok(None),
        }
    }

    pub fn field_config(&self, epsilon: f64) -> anyhow::Result<FieldConfig> {
        FieldConfig::new(
            epsilon,
            self.axis()?,
            self.drift_axis()?,
            self.problem.e_weak.clone(),
            self.problem.b_weak.clone(),
            Some(self.problem.horizon),
        )
        .map_err(|e| anyhow::anyhow!("problem fields: {e}"))
    }

    pub fn initial_data(&self) -> anyhow::Result<InitialData> {
        InitialData::new(
            self.initial_data.spatial.clone(),
            self.initial_data.velocity.clone(),
        )
        .map_err(|e| anyhow::anyhow!("initial_data: {e}"))
    }

    pub fn linear_problem(&self, epsilon: f64) -> anyhow::Result<LinearProblem> {
        let gyro = GyroQuadrature::new(self.quadrature.gyro_nodes)
            .map_err(|e| anyhow::anyhow!("quadrature.gyro_nodes: {e}"))?;
        LinearProblem::new(
            self.field_config(epsilon)?,
            self.initial_data()?,
            self.problem.variant,
            self.problem.horizon,
            gyro,
        )
        .map_err(|e| anyhow::anyhow!("problem: {e}"))
    }

    pub fn test_suite(&self) -> Vec<TestFunction> {
        if self.tests.suite == "custom" {
            self.tests.functions.clone()
        } else {
            default_test_suite(self.problem.horizon)
        }
    }

    pub fn vp_initial_data(&self) -> anyhow::Result<InitialData> {
        InitialData::new(self.vp.spatial.clone(), self.vp.velocity.clone())
            .map_err(|e| anyhow::anyhow!("vp initial data: {e}"))
    }

    pub fn vp_config(&self, epsilon: f64, mode: VpMode) -> anyhow::Result<VpConfig> {
        let grid = Grid3::new(self.vp.cells, self.vp.lengths)
            .map_err(|e| anyhow::anyhow!("vp grid: {e}"))?;
        let cfg = VpConfig {
            grid,
            epsilon,
            axis: self.axis()?,
            particles: self.vp.particles,
            dt_macro: self.vp.dt_macro,
            substeps: self
                .vp
                .substeps
                .max(VpConfig::required_substeps(self.vp.dt_macro, epsilon)),
            horizon: self.vp.horizon,
            seed: self.seed,
            mode,
            snapshot_every: self.vp.snapshot_every,
            gyro_nodes: self.quadrature.gyro_nodes,
            velocity_bound: self.vp.velocity_bound,
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("vp: {e}"))?;
        Ok(cfg)
    }

    pub fn rho_tau_test_function(&self) -> SpaceTimeTestFunction {
        SpaceTimeTestFunction {
            t_center: self.rho_tau.t_center,
            t_radius: self.rho_tau.t_radius,
            x_center: self.rho_tau.x_center,
            x_radius: self.rho_tau.x_radius,
        }
    }
}
