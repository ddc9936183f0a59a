//! The experiment registry and problem construction.

use std::sync::Arc;

use nalgebra::DVector;
use rsoc_core::cost::{LinearTaskMap, TaskMap};
use rsoc_core::models::{
    Actuation, CartPole, CartPoleParams, CartPoleTip, Cube, CubeParams, DoublePendulum,
    DoublePendulumParams, DoublePendulumTip, Hopper2d, HopperParams, Pendulum, PendulumParams,
    PendulumTip, Quadrotor2d, QuadrotorParams,
};
use rsoc_core::{Dynamics, QuadraticGoalCost, SolverSettings, TrajectoryProblem};

use crate::config::{
    CostConfig, ExperimentConfig, ModelConfig, NoiseSection, ScheduleSection, SolverKind,
    SuccessSection, ZerothSection,
};
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Single,
    /// One run per sample count in `sweep`.
    SampleSweep,
    /// One run per solver in `compare`.
    SolverComparison,
}

#[derive(Debug, Clone, Copy)]
pub struct Experiment {
    pub name: &'static str,
    pub doc: &'static str,
    pub kind: ExperimentKind,
    defaults: fn() -> ExperimentConfig,
}

impl Experiment {
    pub fn default_config(&self) -> ExperimentConfig {
        (self.defaults)()
    }
}

pub fn registry() -> Vec<Experiment> {
    use ExperimentKind::*;
    vec![
        Experiment {
            name: "pendulum-swingup",
            doc: "swing a frictionless pendulum from hanging to upright",
            kind: Single,
            defaults: pendulum_swingup,
        },
        Experiment {
            name: "pendulum-friction",
            doc: "pendulum swing-up with Coulomb friction on the hinge",
            kind: Single,
            defaults: pendulum_friction,
        },
        Experiment {
            name: "double-pendulum",
            doc: "shoulder-actuated double pendulum with joint dry friction, swing-up",
            kind: Single,
            defaults: double_pendulum,
        },
        Experiment {
            name: "cartpole-friction",
            doc: "cart-pole swing-up with dry friction on rail and hinge",
            kind: Single,
            defaults: cartpole_friction,
        },
        Experiment {
            name: "cube-lift",
            doc: "lift a cube resting on a table",
            kind: Single,
            defaults: cube_lift,
        },
        Experiment {
            name: "cube-slide",
            doc: "slide a cube along a table against friction",
            kind: Single,
            defaults: cube_slide,
        },
        Experiment {
            name: "quadrotor-takeoff-2d",
            doc: "planar quadrotor taking off from the ground to 1 m",
            kind: Single,
            defaults: quadrotor_takeoff,
        },
        Experiment {
            name: "hopper-jump-2d",
            doc: "one-legged hopper jumping from a stretched stance to 0.3 m higher",
            kind: Single,
            defaults: hopper_jump,
        },
        Experiment {
            name: "sample-sweep",
            doc: "cartpole-friction with randomized DDP over a range of sample counts",
            kind: SampleSweep,
            defaults: sample_sweep,
        },
        Experiment {
            name: "schedule-compare",
            doc: "cube-lift with plain, fixed-noise and adaptive-noise DDP at equal budgets",
            kind: SolverComparison,
            defaults: schedule_compare,
        },
    ]
}

pub fn lookup(name: &str) -> Result<Experiment, BenchError> {
    let all = registry();
    all.iter().find(|e| e.name == name).copied().ok_or_else(|| {
        BenchError::UnknownExperiment(
            name.to_string(),
            all.iter().map(|e| e.name).collect::<Vec<_>>().join(", "),
        )
    })
}

fn base(
    experiment: &str,
    model: ModelConfig,
    horizon: usize,
    cost: CostConfig,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: experiment.into(),
        solver: SolverKind::Rddp,
        seed: 0,
        horizon,
        initial_state: None,
        initial_control: None,
        sweep: None,
        compare: None,
        model,
        cost,
        noise: NoiseSection::default(),
        schedule: ScheduleSection::default(),
        ddp: SolverSettings::default(),
        zeroth: ZerothSection::default(),
        success: SuccessSection::default(),
    }
}

fn pendulum_swingup() -> ExperimentConfig {
    let mut c = base(
        "pendulum-swingup",
        ModelConfig::Pendulum(PendulumParams {
            dt: 5e-3,
            ..Default::default()
        }),
        400,
        CostConfig {
            w_p: 2.0,
            w_u: 2e-5,
            target: vec![0.0, 1.0],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 1.0,
        samples: 4,
        ..Default::default()
    };
    c.schedule.alpha0 = 1e-2;
    c.ddp.max_iterations = 100;
    c.zeroth = ZerothSection {
        eps: 0.5,
        samples: 16,
        step_size: 100.0,
        max_iterations: 300,
    };
    c.success = SuccessSection {
        goal_distance: Some(0.1),
        cost: Some(0.3),
    };
    c
}

fn pendulum_friction() -> ExperimentConfig {
    let mut c = pendulum_swingup();
    c.experiment = "pendulum-friction".into();
    c.model = ModelConfig::Pendulum(PendulumParams {
        dt: 5e-3,
        coulomb: 0.5,
        ..Default::default()
    });
    c.noise.eps = 2.0;
    c.schedule.alpha0 = 1e-4;
    c.ddp.max_iterations = 200;
    c
}

fn double_pendulum() -> ExperimentConfig {
    let mut c = base(
        "double-pendulum",
        ModelConfig::DoublePendulum(DoublePendulumParams {
            actuation: Actuation::Shoulder,
            ..Default::default()
        }),
        200,
        CostConfig {
            w_p: 2.0,
            w_u: 1e-5,
            target: vec![0.0, 2.0],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 1.0,
        samples: 16,
        ..Default::default()
    };
    c.schedule.alpha0 = 1e-4;
    c.ddp.max_iterations = 200;
    c.success = SuccessSection {
        goal_distance: Some(0.2),
        cost: None,
    };
    c
}

fn cartpole_friction() -> ExperimentConfig {
    let mut c = base(
        "cartpole-friction",
        ModelConfig::CartPole(CartPoleParams::default()),
        200,
        CostConfig {
            w_p: 2.0,
            w_u: 1e-5,
            target: vec![0.0, 1.0],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 3.0,
        samples: 8,
        ..Default::default()
    };
    c.schedule.alpha0 = 1e-3;
    c.schedule.stall_budget = 30;
    c.ddp.max_iterations = 150;
    c.success = SuccessSection {
        goal_distance: None,
        cost: Some(0.25),
    };
    c
}

fn cube_lift() -> ExperimentConfig {
    let mut c = base(
        "cube-lift",
        ModelConfig::Cube(CubeParams::default()),
        100,
        CostConfig {
            w_p: 10.0,
            w_u: 1e-2,
            target: vec![0.0, 0.1],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 0.1,
        samples: 8,
        ..Default::default()
    };
    c.success = SuccessSection {
        goal_distance: Some(0.02),
        cost: None,
    };
    c
}

fn cube_slide() -> ExperimentConfig {
    let mut c = cube_lift();
    c.experiment = "cube-slide".into();
    c.cost.target = vec![0.3, 0.0];
    c
}

fn quadrotor_takeoff() -> ExperimentConfig {
    let mut c = base(
        "quadrotor-takeoff-2d",
        ModelConfig::Quadrotor(QuadrotorParams {
            mass: 0.1,
            ..Default::default()
        }),
        100,
        CostConfig {
            w_p: 4.0,
            w_u: 1e-3,
            target: vec![0.0, 1.0],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 0.5,
        samples: 8,
        ..Default::default()
    };
    c.ddp.max_iterations = 200;
    c.success = SuccessSection {
        goal_distance: Some(0.1),
        cost: None,
    };
    c
}

fn hopper_jump() -> ExperimentConfig {
    let p = HopperParams {
        base_mass: 0.5,
        armature: 0.05,
        ..Default::default()
    };
    let stand = p.thigh + p.shank;
    let mut c = base(
        "hopper-jump-2d",
        ModelConfig::Hopper(p),
        60,
        CostConfig {
            w_p: 10.0,
            w_u: 1e-5,
            target: vec![stand + 0.3],
            control_ref: vec![],
        },
    );
    c.noise = NoiseSection {
        eps: 2.0,
        samples: 8,
        ..Default::default()
    };
    c.ddp.max_iterations = 200;
    c.success = SuccessSection {
        goal_distance: Some(0.1),
        cost: None,
    };
    c
}

fn sample_sweep() -> ExperimentConfig {
    let mut c = cartpole_friction();
    c.experiment = "sample-sweep".into();
    c.sweep = Some(vec![1, 2, 4, 8, 16, 32, 64]);
    c
}

fn schedule_compare() -> ExperimentConfig {
    let mut c = cube_lift();
    c.experiment = "schedule-compare".into();
    c.compare = Some(vec![
        SolverKind::Ddp,
        SolverKind::RddpFixed,
        SolverKind::Rddp,
    ]);
    c
}

/// A ready-to-solve problem plus what is needed to judge the result.
pub struct Setup {
    pub problem: TrajectoryProblem,
    pub goal: Arc<QuadraticGoalCost>,
    pub initial_controls: Vec<DVector<f64>>,
}

struct ModelParts {
    dynamics: Arc<dyn Dynamics>,
    map: Arc<dyn TaskMap>,
    rest: DVector<f64>,
    default_target: Vec<f64>,
}

fn model_parts(model: &ModelConfig) -> Result<ModelParts, BenchError> {
    let err = |e: rsoc_core::DynamicsError| BenchError::Config(format!("model: {e}"));
    Ok(match model {
        ModelConfig::Pendulum(p) => ModelParts {
            dynamics: Arc::new(Pendulum::new(p.clone()).map_err(err)?),
            map: Arc::new(PendulumTip { length: p.length }),
            rest: DVector::zeros(2),
            default_target: vec![0.0, p.length],
        },
        ModelConfig::CartPole(p) => ModelParts {
            dynamics: Arc::new(CartPole::new(p.clone()).map_err(err)?),
            map: Arc::new(CartPoleTip { length: p.length }),
            rest: DVector::zeros(4),
            default_target: vec![0.0, p.length],
        },
        ModelConfig::DoublePendulum(p) => ModelParts {
            dynamics: Arc::new(DoublePendulum::new(p.clone()).map_err(err)?),
            map: Arc::new(DoublePendulumTip {
                length1: p.length1,
                length2: p.length2,
            }),
            rest: DVector::zeros(4),
            default_target: vec![0.0, p.length1 + p.length2],
        },
        ModelConfig::Cube(p) => ModelParts {
            dynamics: Arc::new(Cube::new(p.clone()).map_err(err)?),
            map: Arc::new(LinearTaskMap::select(4, &[0, 1])),
            rest: DVector::zeros(4),
            default_target: vec![0.0, 0.1],
        },
        ModelConfig::Quadrotor(p) => ModelParts {
            dynamics: Arc::new(Quadrotor2d::new(p.clone()).map_err(err)?),
            map: Arc::new(LinearTaskMap::select(6, &[0, 1])),
            rest: DVector::zeros(6),
            default_target: vec![0.0, 1.0],
        },
        ModelConfig::Hopper(p) => {
            let hopper = Hopper2d::new(p.clone()).map_err(err)?;
            let rest = hopper.stretched_state();
            ModelParts {
                default_target: vec![rest[0] + 0.3],
                dynamics: Arc::new(hopper),
                map: Arc::new(LinearTaskMap::select(6, &[0])),
                rest,
            }
        }
    })
}

pub fn build(config: &ExperimentConfig) -> Result<Setup, BenchError> {
    let parts = model_parts(&config.model)?;
    let nx = parts.dynamics.state_dim();
    let nu = parts.dynamics.control_dim();
    let x0 = match &config.initial_state {
        Some(x) if x.len() != nx => {
            return Err(BenchError::Config(format!(
                "initial_state has {} entries, the model has {nx} states",
                x.len()
            )))
        }
        Some(x) => DVector::from_vec(x.clone()),
        None => parts.rest,
    };
    let target = if config.cost.target.is_empty() {
        parts.default_target
    } else {
        config.cost.target.clone()
    };
    let control_ref = match config.cost.control_ref.len() {
        0 => DVector::zeros(nu),
        n if n == nu => DVector::from_vec(config.cost.control_ref.clone()),
        n => {
            return Err(BenchError::Config(format!(
                "control_ref has {n} entries, expected {nu}"
            )))
        }
    };
    let goal = Arc::new(
        QuadraticGoalCost::new(
            parts.map,
            DVector::from_vec(target),
            control_ref,
            config.cost.w_p,
            config.cost.w_u,
        )
        .map_err(BenchError::Config)?,
    );
    let u0 = match &config.initial_control {
        Some(u) if u.len() != nu => {
            return Err(BenchError::Config(format!(
                "initial_control has {} entries, expected {nu}",
                u.len()
            )))
        }
        Some(u) => DVector::from_vec(u.clone()),
        None => DVector::zeros(nu),
    };
    let problem = TrajectoryProblem::new(
        config.horizon,
        x0,
        goal.clone(),
        goal.clone(),
        parts.dynamics,
    )
    .map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(Setup {
        problem,
        goal,
        initial_controls: vec![u0; config.horizon],
    })
}
