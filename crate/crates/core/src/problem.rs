//! The discrete optimal-control problem and trajectory rollouts.

use std::sync::Arc;

use nalgebra::DVector;

use crate::cost::{RunningCost, TerminalCost};
use crate::dynamics::Dynamics;
use crate::error::{ProblemError, RolloutError};

/// `min l_N(x_N) + sum_t l_t(x_t, u_t)` subject to `x_{t+1} = f(x_t, u_t)`,
/// `x_0 = x̂_0`.
#[derive(Clone)]
pub struct TrajectoryProblem {
    horizon: usize,
    initial_state: DVector<f64>,
    running_cost: Arc<dyn RunningCost>,
    terminal_cost: Arc<dyn TerminalCost>,
    dynamics: Arc<dyn Dynamics>,
}

impl TrajectoryProblem {
    pub fn new(
        horizon: usize,
        initial_state: DVector<f64>,
        running_cost: Arc<dyn RunningCost>,
        terminal_cost: Arc<dyn TerminalCost>,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self, ProblemError> {
        if horizon == 0 {
            return Err(ProblemError::InvalidInput(
                "horizon must be at least 1".into(),
            ));
        }
        if !(dynamics.dt() > 0.0) {
            return Err(ProblemError::InvalidInput(format!(
                "time step must be positive, got {}",
                dynamics.dt()
            )));
        }
        if initial_state.len() != dynamics.state_dim() {
            return Err(ProblemError::InvalidInput(format!(
                "initial state has dimension {}, dynamics expect {}",
                initial_state.len(),
                dynamics.state_dim()
            )));
        }
        Ok(Self {
            horizon,
            initial_state,
            running_cost,
            terminal_cost,
            dynamics,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dynamics.dt()
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.initial_state
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn running_cost(&self) -> &dyn RunningCost {
        &*self.running_cost
    }

    pub fn terminal_cost(&self) -> &dyn TerminalCost {
        &*self.terminal_cost
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    /// Same problem with a different initial state.
    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self, ProblemError> {
        Self::new(
            self.horizon,
            x0,
            self.running_cost.clone(),
            self.terminal_cost.clone(),
            self.dynamics.clone(),
        )
    }

    /// Zero control sequence of the right shape.
    pub fn zero_controls(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(self.control_dim()); self.horizon]
    }
}

/// States `x_0..x_N` and controls `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }
}

/// Rolls `controls` through `step`, where `step(t, x, u)` may vary in time.
pub(crate) fn rollout_with<F>(
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    mut step: F,
) -> Result<Trajectory, RolloutError>
where
    F: FnMut(
        usize,
        &DVector<f64>,
        &DVector<f64>,
    ) -> Result<DVector<f64>, crate::error::DynamicsError>,
{
    if controls.is_empty() {
        return Err(RolloutError::InvalidInput("empty control sequence".into()));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for (t, u) in controls.iter().enumerate() {
        let next = step(t, &states[t], u).map_err(|source| RolloutError::Dynamics {
            timestep: t,
            source,
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RolloutError::Divergence { timestep: t + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

/// Integrates `controls` from `x0`. The result is feasible by construction.
pub fn rollout(
    dynamics: &dyn Dynamics,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<Trajectory, RolloutError> {
    if x0.len() != dynamics.state_dim() {
        return Err(RolloutError::InvalidInput(format!(
            "initial state has dimension {}, expected {}",
            x0.len(),
            dynamics.state_dim()
        )));
    }
    if let Some((t, u)) = controls
        .iter()
        .enumerate()
        .find(|(_, u)| u.len() != dynamics.control_dim())
    {
        return Err(RolloutError::InvalidInput(format!(
            "control {t} has dimension {}, expected {}",
            u.len(),
            dynamics.control_dim()
        )));
    }
    rollout_with(x0, controls, |_, x, u| dynamics.step(x, u))
}

/// `l_N(x_N) + sum_t l_t(x_t, u_t)`.
pub fn total_cost(
    problem: &TrajectoryProblem,
    trajectory: &Trajectory,
) -> Result<f64, ProblemError> {
    let n = problem.horizon();
    if trajectory.controls.len() != n || trajectory.states.len() != n + 1 {
        return Err(ProblemError::InvalidInput(format!(
            "trajectory has {} states and {} controls, horizon is {n}",
            trajectory.states.len(),
            trajectory.controls.len()
        )));
    }
    Ok(trajectory_cost(
        problem.running_cost(),
        problem.terminal_cost(),
        trajectory,
    ))
}

pub(crate) fn trajectory_cost(
    running: &dyn RunningCost,
    terminal: &dyn TerminalCost,
    trajectory: &Trajectory,
) -> f64 {
    let running: f64 = trajectory
        .states
        .iter()
        .zip(&trajectory.controls)
        .map(|(x, u)| running.value(x, u))
        .sum();
    terminal.value(trajectory.final_state()) + running
}
