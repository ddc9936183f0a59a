//! Trajectory-level zero-th order baseline: the whole control sequence is
//! perturbed at once and the gradient of the total cost is estimated from
//! rollout costs only, with the unperturbed cost as baseline.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddp::check_inputs;
use crate::dynamics::{CountingDynamics, Dynamics};
use crate::error::{ProblemError, SmoothingError};
use crate::problem::{rollout_with, trajectory_cost, Trajectory, TrajectoryProblem};
use crate::report::{IterationRecord, SolveReport, SolveStatus};
use crate::smoothing::{gaussian_vector, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZerothOrderSettings {
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub step_size: f64,
    pub max_iterations: usize,
    pub target_cost: Option<f64>,
}

impl Default for ZerothOrderSettings {
    fn default() -> Self {
        Self {
            eps: 0.1,
            samples: 16,
            seed: 0,
            step_size: 1e-2,
            max_iterations: 200,
            target_cost: None,
        }
    }
}

impl ZerothOrderSettings {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ProblemError::InvalidInput(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(ProblemError::InvalidInput(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.samples == 0 {
            return Err(ProblemError::InvalidInput(
                "at least one sample is required".into(),
            ));
        }
        Ok(())
    }
}

/// A gradient estimate and the bookkeeping around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEstimate {
    pub gradient: DVector<f64>,
    /// Objective at the unperturbed point.
    pub baseline: f64,
    /// Samples whose objective was finite.
    pub used: usize,
}

/// `(1/(Mε)) Σ (J(u + εZ_i) − J(u)) Z_i` for a generic objective over a flat
/// vector. Samples where `J` is `None` or not finite are dropped.
pub fn score_gradient<F>(
    objective: F,
    u: &DVector<f64>,
    eps: f64,
    samples: usize,
    seed: u64,
    epoch: u64,
    subtract_baseline: bool,
) -> Result<ScoreEstimate, SmoothingError>
where
    F: Fn(&DVector<f64>) -> Option<f64> + Sync,
{
    if !(eps > 0.0) {
        return Err(SmoothingError::ZeroNoise);
    }
    if samples == 0 {
        return Err(SmoothingError::NoSamples);
    }
    let baseline = objective(u)
        .filter(|j| j.is_finite())
        .ok_or(SmoothingError::AllSamplesDiscarded(0))?;
    let draws: Vec<(DVector<f64>, Option<f64>)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let z = gaussian_vector(&mut stream(seed, epoch, i), u.len());
            let j = objective(&(u + &z * eps)).filter(|j| j.is_finite());
            (z, j)
        })
        .collect();
    let offset = if subtract_baseline { baseline } else { 0.0 };
    let mut gradient = DVector::zeros(u.len());
    let mut used = 0usize;
    for (z, j) in &draws {
        if let Some(j) = j {
            gradient += z * (j - offset);
            used += 1;
        }
    }
    if used == 0 {
        return Err(SmoothingError::AllSamplesDiscarded(samples));
    }
    Ok(ScoreEstimate {
        gradient: gradient / (used as f64 * eps),
        baseline,
        used,
    })
}

fn flatten(controls: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        controls.iter().map(|u| u.len()).sum(),
        controls.iter().flat_map(|u| u.iter().copied()),
    )
}

fn unflatten(flat: &DVector<f64>, nu: usize) -> Vec<DVector<f64>> {
    flat.as_slice()
        .chunks(nu)
        .map(DVector::from_column_slice)
        .collect()
}

/// Zero-th order estimate of `∇_u J` over the stacked control sequence,
/// with `J` evaluated on the raw dynamics.
pub fn zeroth_order_gradient(
    problem: &TrajectoryProblem,
    controls: &[DVector<f64>],
    settings: &ZerothOrderSettings,
    epoch: u64,
) -> Result<(Vec<DVector<f64>>, ScoreEstimate), SmoothingError> {
    gradient_through(problem, &**problem.dynamics(), controls, settings, epoch)
}

fn gradient_through(
    problem: &TrajectoryProblem,
    dynamics: &dyn Dynamics,
    controls: &[DVector<f64>],
    settings: &ZerothOrderSettings,
    epoch: u64,
) -> Result<(Vec<DVector<f64>>, ScoreEstimate), SmoothingError> {
    let nu = problem.control_dim();
    let objective = |flat: &DVector<f64>| {
        let us = unflatten(flat, nu);
        rollout_with(problem.initial_state(), &us, |_, x, u| dynamics.step(x, u))
            .ok()
            .map(|t| trajectory_cost(problem.running_cost(), problem.terminal_cost(), &t))
    };
    let est = score_gradient(
        objective,
        &flatten(controls),
        settings.eps,
        settings.samples,
        settings.seed,
        epoch,
        true,
    )?;
    Ok((unflatten(&est.gradient, nu), est))
}

/// Fixed-step gradient descent on the zero-th order estimate.
pub fn solve_zeroth(
    problem: &TrajectoryProblem,
    initial_controls: &[DVector<f64>],
    settings: &ZerothOrderSettings,
) -> Result<SolveReport, ProblemError> {
    check_inputs(problem, initial_controls)?;
    settings.validate()?;
    let start = Instant::now();
    let counter = CountingDynamics::new(&**problem.dynamics());
    let nu = problem.control_dim();
    let mut flat = flatten(initial_controls);
    let mut records = Vec::new();
    let mut initial_cost = None;
    let mut status = SolveStatus::MaxIterations;
    let mut last_cost = f64::INFINITY;
    for iter in 0..=settings.max_iterations {
        let controls = unflatten(&flat, nu);
        let (grad, est) =
            match gradient_through(problem, &counter, &controls, settings, iter as u64) {
                Ok(r) => r,
                Err(_) => {
                    status = SolveStatus::Diverged;
                    break;
                }
            };
        initial_cost.get_or_insert(est.baseline);
        last_cost = est.baseline;
        let g = flatten(&grad);
        let reached = settings.target_cost.is_some_and(|c| est.baseline <= c);
        let done = reached || iter == settings.max_iterations;
        records.push(IterationRecord {
            iter,
            stage: 0,
            cost: est.baseline,
            qu_inf: g.amax(),
            qu_w: g.norm(),
            eps: settings.eps,
            alpha_tol: 0.0,
            ls_alpha: if done { 0.0 } else { settings.step_size },
            reg: 0.0,
            dyn_evals: counter.evaluations(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if reached {
            status = SolveStatus::TargetReached;
            break;
        }
        if done {
            break;
        }
        flat -= g * settings.step_size;
    }
    let controls = unflatten(&flat, nu);
    let trajectory = rollout_with(problem.initial_state(), &controls, |_, x, u| {
        problem.dynamics().step(x, u)
    })
    .unwrap_or_else(|_| Trajectory {
        states: vec![problem.initial_state().clone()],
        controls: controls.clone(),
    });
    Ok(SolveReport {
        status,
        records,
        controls,
        trajectory,
        feedback: Vec::new(),
        initial_cost: initial_cost.unwrap_or(f64::INFINITY),
        final_cost: last_cost,
        dyn_evals: counter.evaluations(),
        final_epoch: 0,
    })
}
