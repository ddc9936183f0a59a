//! Experiment configuration, stored as TOML.

use std::path::Path;

use rsoc_core::adaptive::AdaptiveSchedule;
use rsoc_core::models::{
    CartPoleParams, CubeParams, DoublePendulumParams, HopperParams, PendulumParams, QuadrotorParams,
};
use rsoc_core::smoothing::{GradientEstimator, NoiseConfig, NoiseDistribution};
use rsoc_core::zeroth::ZerothOrderSettings;
use rsoc_core::SolverSettings;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// DDP on the raw dynamics.
    Ddp,
    /// Randomized DDP with the adaptive noise cascade.
    Rddp,
    /// Randomized DDP at a single noise level.
    RddpFixed,
    /// Gradient descent on the trajectory-level zero-th order estimate.
    Zeroth,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Ddp => "ddp",
            SolverKind::Rddp => "rddp",
            SolverKind::RddpFixed => "rddp-fixed",
            SolverKind::Zeroth => "zeroth",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BenchError> {
        match s {
            "ddp" => Ok(SolverKind::Ddp),
            "rddp" => Ok(SolverKind::Rddp),
            "rddp-fixed" => Ok(SolverKind::RddpFixed),
            "zeroth" => Ok(SolverKind::Zeroth),
            other => Err(BenchError::Config(format!(
                "unknown solver `{other}` (expected ddp, rddp, rddp-fixed or zeroth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Pendulum(PendulumParams),
    CartPole(CartPoleParams),
    DoublePendulum(DoublePendulumParams),
    Cube(CubeParams),
    Quadrotor(QuadrotorParams),
    Hopper(HopperParams),
}

impl ModelConfig {
    pub fn dt(&self) -> f64 {
        match self {
            ModelConfig::Pendulum(p) => p.dt,
            ModelConfig::CartPole(p) => p.dt,
            ModelConfig::DoublePendulum(p) => p.dt,
            ModelConfig::Cube(p) => p.dt,
            ModelConfig::Quadrotor(p) => p.dt,
            ModelConfig::Hopper(p) => p.dt,
        }
    }
}

/// Terminal goal `w_p ‖p(x_N) − target‖²` plus running `w_u ‖u − control_ref‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub w_p: f64,
    pub w_u: f64,
    /// Task-space target; empty means the model's default goal.
    #[serde(default)]
    pub target: Vec<f64>,
    /// Empty means zero.
    #[serde(default)]
    pub control_ref: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Initial noise level of the cascade, and the level of `rddp-fixed`.
    pub eps: f64,
    pub samples: usize,
    pub estimator: GradientEstimator,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            eps: 0.1,
            samples: 8,
            estimator: GradientEstimator::FirstOrder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub alpha0: f64,
    pub eps_target: Option<f64>,
    pub alpha_target: Option<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub stall_budget: usize,
    /// Defaults to the solver's `max_iterations`, so that fixed and adaptive
    /// runs get the same budget.
    pub max_total_iterations: Option<usize>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = AdaptiveSchedule::default();
        Self {
            alpha0: s.alpha0,
            eps_target: s.eps_target,
            alpha_target: s.alpha_target,
            rho: s.rho,
            gamma: s.gamma,
            stall_budget: s.stall_budget,
            max_total_iterations: s.max_total_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZerothSection {
    pub eps: f64,
    pub samples: usize,
    pub step_size: f64,
    pub max_iterations: usize,
}

impl Default for ZerothSection {
    fn default() -> Self {
        let z = ZerothOrderSettings::default();
        Self {
            eps: z.eps,
            samples: z.samples,
            step_size: z.step_size,
            max_iterations: z.max_iterations,
        }
    }
}

/// Thresholds deciding the exit status of a run. Both are checked on the
/// raw closed-loop rollout of the returned policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuccessSection {
    pub goal_distance: Option<f64>,
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub solver: SolverKind,
    pub seed: u64,
    pub horizon: usize,
    /// Defaults to the model's resting state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// Constant initial control; defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_control: Option<Vec<f64>>,
    /// Sample counts for a sweep experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    /// Solvers for a comparison experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<Vec<SolverKind>>,
    pub model: ModelConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub ddp: SolverSettings,
    #[serde(default)]
    pub zeroth: ZerothSection,
    #[serde(default)]
    pub success: SuccessSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let config: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            eps: self.noise.eps,
            samples: self.noise.samples,
            distribution: NoiseDistribution::Gaussian,
            seed: self.seed,
            estimator: self.noise.estimator,
        }
    }

    pub fn adaptive_schedule(&self) -> AdaptiveSchedule {
        AdaptiveSchedule {
            eps0: self.noise.eps,
            alpha0: self.schedule.alpha0,
            eps_target: self.schedule.eps_target,
            alpha_target: self.schedule.alpha_target,
            rho: self.schedule.rho,
            gamma: self.schedule.gamma,
            stall_budget: self.schedule.stall_budget,
            max_total_iterations: Some(
                self.schedule
                    .max_total_iterations
                    .unwrap_or(self.ddp.max_iterations),
            ),
        }
    }

    pub fn zeroth_settings(&self) -> ZerothOrderSettings {
        ZerothOrderSettings {
            eps: self.zeroth.eps,
            samples: self.zeroth.samples,
            seed: self.seed,
            step_size: self.zeroth.step_size,
            max_iterations: self.zeroth.max_iterations,
            target_cost: None,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.noise.samples == 0 {
            return bad("noise.samples must be at least 1".into());
        }
        if !(self.noise.eps >= 0.0 && self.noise.eps.is_finite()) {
            return bad(format!(
                "noise.eps must be finite and >= 0, got {}",
                self.noise.eps
            ));
        }
        if self.solver == SolverKind::RddpFixed && self.noise.eps == 0.0 {
            return bad("rddp-fixed needs noise.eps > 0".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() || sweep.contains(&0) {
                return bad("sweep sample counts must be positive".into());
            }
        }
        if let Some(c) = &self.compare {
            if c.len() < 2 {
                return bad("a comparison needs at least two solvers".into());
            }
        }
        self.ddp
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        self.adaptive_schedule()
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if self.solver == SolverKind::Zeroth {
            self.zeroth_settings()
                .validate()
                .map_err(|e| BenchError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
