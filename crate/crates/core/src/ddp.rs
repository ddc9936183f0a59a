//! Gauss-Newton DDP (iLQR) with control-space Levenberg-Marquardt
//! regularization and a backtracking line search.
//!
//! The same loop runs on the raw dynamics or on their randomized smoothing;
//! in the latter case one set of samples is frozen per epoch and the epoch
//! advances each time a step is accepted.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_stage_derivatives, StageDerivatives, TerminalDerivatives};
use crate::dynamics::{CountingDynamics, Dynamics};
use crate::error::{BackwardPassError, ProblemError, RolloutError, SmoothingError};
use crate::problem::{rollout_with, trajectory_cost, Trajectory, TrajectoryProblem};
use crate::report::{IterationRecord, SolveReport, SolveStatus};
use crate::smoothing::{NoiseConfig, SmoothedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Maximum number of backward/forward iterations.
    pub max_iterations: usize,
    /// Stop once `‖Q_u‖_{Q_uu⁻¹}` falls below this.
    pub tolerance: f64,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_increase: f64,
    pub reg_decrease: f64,
    /// Step sizes tried in order; strictly decreasing in `(0, 1]`.
    pub line_search: Vec<f64>,
    /// Minimal ratio of actual to expected cost reduction.
    pub acceptance_ratio: f64,
    /// Include second-order dynamics terms when the model provides them.
    pub second_order: bool,
    /// Stop as soon as the reference cost is at most this value.
    pub target_cost: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            reg_init: 1e-9,
            reg_min: 1e-9,
            reg_max: 1e6,
            reg_increase: 10.0,
            reg_decrease: 2.0,
            line_search: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
            acceptance_ratio: 1e-4,
            second_order: false,
            target_cost: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |msg: String| Err(ProblemError::InvalidInput(msg));
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if !(self.reg_min > 0.0 && self.reg_min <= self.reg_init && self.reg_init <= self.reg_max) {
            return bad(format!(
                "regularization bounds must satisfy 0 < min <= init <= max, got {} / {} / {}",
                self.reg_min, self.reg_init, self.reg_max
            ));
        }
        if !(self.reg_increase > 1.0 && self.reg_decrease > 1.0) {
            return bad("regularization factors must exceed 1".into());
        }
        if self.line_search.is_empty()
            || self.line_search[0] > 1.0
            || self.line_search.iter().any(|a| !(*a > 0.0))
            || self.line_search.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("line-search steps must be strictly decreasing in (0, 1]".into());
        }
        if !(self.acceptance_ratio > 0.0) {
            return bad("acceptance ratio must be positive".into());
        }
        Ok(())
    }
}

/// Local quadratic model of the Q-function at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct QStageModel {
    pub qx: DVector<f64>,
    pub qu: DVector<f64>,
    pub qxx: DMatrix<f64>,
    /// `n_u x n_x`.
    pub qux: DMatrix<f64>,
    pub quu: DMatrix<f64>,
}

/// Dynamics and cost derivatives at one timestep.
#[derive(Debug, Clone)]
pub struct StageLinearization {
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub cost: StageDerivatives,
    /// Hessians of each output over `(x, u)`, when available.
    pub second_order: Option<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryDerivatives {
    pub stages: Vec<StageLinearization>,
    pub terminal: TerminalDerivatives,
}

#[derive(Debug, Clone)]
pub struct BackwardPassOutput {
    pub k: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub q: Vec<QStageModel>,
    /// `Σ kᵀ Q_u`.
    pub dv_linear: f64,
    /// `Σ kᵀ Q_uu k` with the unregularized `Q_uu`.
    pub dv_quadratic: f64,
    pub qu_inf: f64,
    pub qu_w: f64,
    /// Value gradient at `t = 0`.
    pub vx0: DVector<f64>,
}

impl BackwardPassOutput {
    /// Predicted cost change `ΔV(α)`.
    pub fn expected_change(&self, alpha: f64) -> f64 {
        alpha * self.dv_linear + 0.5 * alpha * alpha * self.dv_quadratic
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Riccati-like sweep from `V_N = l_N` back to `t = 0`.
pub fn backward_pass(
    derivatives: &TrajectoryDerivatives,
    reg: f64,
    use_second_order: bool,
) -> Result<BackwardPassOutput, BackwardPassError> {
    let n = derivatives.stages.len();
    if n == 0 {
        return Err(BackwardPassError::Shape("no stages".into()));
    }
    let nx = derivatives.terminal.lx.len();
    let mut vx = derivatives.terminal.lx.clone();
    let mut vxx = derivatives.terminal.lxx.clone();
    let mut k = vec![DVector::zeros(0); n];
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    let mut q = Vec::with_capacity(n);
    let (mut dv_linear, mut dv_quadratic, mut qu_inf) = (0.0, 0.0, 0.0f64);
    for t in (0..n).rev() {
        let s = &derivatives.stages[t];
        let nu = s.fu.ncols();
        if s.fx.shape() != (nx, nx) || s.fu.nrows() != nx {
            return Err(BackwardPassError::Shape(format!(
                "stage {t} Jacobian shapes"
            )));
        }
        let fxt = s.fx.transpose();
        let fut = s.fu.transpose();
        let qx = &s.cost.lx + &fxt * &vx;
        let qu = &s.cost.lu + &fut * &vx;
        let vxx_fx = &vxx * &s.fx;
        let mut qxx = &s.cost.lxx + &fxt * &vxx_fx;
        let mut qux = &s.cost.lux + &fut * &vxx_fx;
        let mut quu = &s.cost.luu + &fut * &vxx * &s.fu;
        if use_second_order {
            if let Some(h) = &s.second_order {
                for (i, hi) in h.iter().enumerate() {
                    let w = vx[i];
                    if w != 0.0 {
                        qxx += hi.view((0, 0), (nx, nx)) * w;
                        qux += hi.view((nx, 0), (nu, nx)) * w;
                        quu += hi.view((nx, nx), (nu, nu)) * w;
                    }
                }
            }
        }
        symmetrize(&mut qxx);
        symmetrize(&mut quu);
        let mut quu_reg = quu.clone();
        for i in 0..nu {
            quu_reg[(i, i)] += reg;
        }
        let chol =
            Cholesky::new(quu_reg).ok_or(BackwardPassError::NotPositiveDefinite { timestep: t })?;
        let kt = -chol.solve(&qu);
        let kk = -chol.solve(&qux);
        dv_linear += kt.dot(&qu);
        dv_quadratic += kt.dot(&(&quu * &kt));
        qu_inf = qu_inf.max(qu.amax());

        let kkt = kk.transpose();
        let quu_k = &quu * &kt;
        vx = &qx + &kkt * &quu_k + &kkt * &qu + qux.transpose() * &kt;
        vxx = &qxx + &kkt * &quu * &kk + &kkt * &qux + qux.transpose() * &kk;
        symmetrize(&mut vxx);

        k[t] = kt;
        gains[t] = kk;
        q.push(QStageModel {
            qx,
            qu,
            qxx,
            qux,
            quu,
        });
    }
    q.reverse();
    Ok(BackwardPassOutput {
        k,
        gains,
        q,
        dv_linear,
        dv_quadratic,
        qu_inf,
        qu_w: (-dv_linear).max(0.0).sqrt(),
        vx0: vx,
    })
}

/// Derivatives of the costs and the (possibly smoothed) dynamics along
/// `trajectory`, evaluated in parallel over timesteps.
pub fn linearize(
    problem: &TrajectoryProblem,
    model: &SmoothedModel<'_>,
    trajectory: &Trajectory,
) -> Result<TrajectoryDerivatives, SmoothingError> {
    let stages = (0..problem.horizon())
        .into_par_iter()
        .map(|t| {
            let x = &trajectory.states[t];
            let u = &trajectory.controls[t];
            let (fx, fu) = model.jacobians(t, x, u)?;
            Ok(StageLinearization {
                fx,
                fu,
                cost: cost_stage_derivatives(problem.running_cost(), x, u),
                second_order: model.second_order(x, u),
            })
        })
        .collect::<Result<Vec<_>, SmoothingError>>()?;
    Ok(TrajectoryDerivatives {
        stages,
        terminal: problem
            .terminal_cost()
            .derivatives(trajectory.final_state()),
    })
}

fn rollout_model(
    problem: &TrajectoryProblem,
    model: &SmoothedModel<'_>,
    controls: &[DVector<f64>],
) -> Result<(Trajectory, f64), RolloutError> {
    let traj = rollout_with(problem.initial_state(), controls, |t, x, u| {
        model.step(t, x, u)
    })?;
    let cost = trajectory_cost(problem.running_cost(), problem.terminal_cost(), &traj);
    Ok((traj, cost))
}

/// Closed-loop rollout `u_t = ū_t + α k_t + K_t (x_t − x̄_t)` through
/// `model`; returns the new trajectory and its cost.
pub fn forward_pass(
    problem: &TrajectoryProblem,
    model: &SmoothedModel<'_>,
    reference: &Trajectory,
    backward: &BackwardPassOutput,
    alpha: f64,
) -> Result<(Trajectory, f64), RolloutError> {
    let n = reference.controls.len();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    states.push(problem.initial_state().clone());
    for t in 0..n {
        let x = &states[t];
        let u = &reference.controls[t]
            + &backward.k[t] * alpha
            + &backward.gains[t] * (x - &reference.states[t]);
        let next = model
            .step(t, x, &u)
            .map_err(|source| RolloutError::Dynamics {
                timestep: t,
                source,
            })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RolloutError::Divergence { timestep: t + 1 });
        }
        controls.push(u);
        states.push(next);
    }
    let traj = Trajectory { states, controls };
    let cost = trajectory_cost(problem.running_cost(), problem.terminal_cost(), &traj);
    if !cost.is_finite() {
        return Err(RolloutError::Divergence { timestep: n });
    }
    Ok((traj, cost))
}

/// Raw-dynamics rollout tracking `reference` with feedback `u = ū + K(x − x̄)`.
pub fn closed_loop_rollout(
    dynamics: &dyn Dynamics,
    x0: &DVector<f64>,
    reference: &Trajectory,
    feedback: &[DMatrix<f64>],
) -> Result<Trajectory, RolloutError> {
    if feedback.len() != reference.controls.len() {
        return Err(RolloutError::InvalidInput(format!(
            "{} feedback gains for {} controls",
            feedback.len(),
            reference.controls.len()
        )));
    }
    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(feedback.len());
    for (t, gain) in feedback.iter().enumerate() {
        let x = &states[t];
        let u = &reference.controls[t] + gain * (x - &reference.states[t]);
        let next = dynamics
            .step(x, &u)
            .map_err(|source| RolloutError::Dynamics {
                timestep: t,
                source,
            })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RolloutError::Divergence { timestep: t + 1 });
        }
        controls.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, controls })
}

/// Offsets that let several solves be concatenated into one log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveContext {
    pub start_epoch: u64,
    pub stage: usize,
    pub iter_offset: usize,
    pub eval_offset: u64,
    pub wall_offset_ms: f64,
}

pub(crate) fn check_inputs(
    problem: &TrajectoryProblem,
    controls: &[DVector<f64>],
) -> Result<(), ProblemError> {
    if controls.len() != problem.horizon() {
        return Err(ProblemError::InvalidInput(format!(
            "{} initial controls for horizon {}",
            controls.len(),
            problem.horizon()
        )));
    }
    if let Some((t, u)) = controls
        .iter()
        .enumerate()
        .find(|(_, u)| u.len() != problem.control_dim())
    {
        return Err(ProblemError::InvalidInput(format!(
            "control {t} has dimension {}, expected {}",
            u.len(),
            problem.control_dim()
        )));
    }
    Ok(())
}

fn raw_noise() -> NoiseConfig {
    NoiseConfig {
        eps: 0.0,
        samples: 1,
        distribution: crate::smoothing::NoiseDistribution::Gaussian,
        seed: 0,
        estimator: crate::smoothing::GradientEstimator::FirstOrder,
    }
}

/// DDP on the raw dynamics (`noise = None`) or on the smoothed dynamics.
pub fn solve(
    problem: &TrajectoryProblem,
    initial_controls: &[DVector<f64>],
    settings: &SolverSettings,
    noise: Option<&NoiseConfig>,
) -> Result<SolveReport, ProblemError> {
    solve_in_context(
        problem,
        initial_controls,
        settings,
        noise,
        &SolveContext::default(),
    )
}

pub fn solve_in_context(
    problem: &TrajectoryProblem,
    initial_controls: &[DVector<f64>],
    settings: &SolverSettings,
    noise: Option<&NoiseConfig>,
    ctx: &SolveContext,
) -> Result<SolveReport, ProblemError> {
    check_inputs(problem, initial_controls)?;
    settings.validate()?;
    let noise = match noise {
        Some(n) => {
            n.validate()
                .map_err(|e| ProblemError::InvalidInput(e.to_string()))?;
            *n
        }
        None => raw_noise(),
    };
    let start = Instant::now();
    let wall = |start: &Instant| ctx.wall_offset_ms + start.elapsed().as_secs_f64() * 1e3;
    let n = problem.horizon();
    let counter = CountingDynamics::new(&**problem.dynamics());
    let evals = |c: &CountingDynamics| ctx.eval_offset + c.evaluations();
    let active = noise.eps > 0.0;

    let mut epoch = ctx.start_epoch;
    let mut model = SmoothedModel::new(&counter, noise, epoch, n);
    let (mut traj, mut cost) = match rollout_model(problem, &model, initial_controls) {
        Ok(r) => r,
        Err(_) => {
            return Ok(SolveReport {
                status: SolveStatus::Diverged,
                records: Vec::new(),
                controls: initial_controls.to_vec(),
                trajectory: Trajectory {
                    states: vec![problem.initial_state().clone()],
                    controls: initial_controls.to_vec(),
                },
                feedback: Vec::new(),
                initial_cost: f64::INFINITY,
                final_cost: f64::INFINITY,
                dyn_evals: evals(&counter),
                final_epoch: epoch,
            })
        }
    };
    let initial_cost = cost;
    let mut reg = settings.reg_init;
    let mut derivatives: Option<TrajectoryDerivatives> = None;
    let mut feedback = Vec::new();
    let mut records = Vec::new();
    let status;
    let mut iter = 0usize;
    loop {
        if derivatives.is_none() {
            match linearize(problem, &model, &traj) {
                Ok(d) => derivatives = Some(d),
                Err(_) => {
                    status = SolveStatus::Diverged;
                    break;
                }
            }
        }
        let d = derivatives.as_ref().expect("linearized above");
        let backward = loop {
            match backward_pass(d, reg, settings.second_order) {
                Ok(b) => break Some(b),
                Err(_) => {
                    reg *= settings.reg_increase;
                    if reg > settings.reg_max {
                        break None;
                    }
                }
            }
        };
        let Some(backward) = backward else {
            status = SolveStatus::BackwardPassFailed;
            break;
        };
        feedback = backward.gains.clone();
        let mut record = IterationRecord {
            iter: ctx.iter_offset + iter,
            stage: ctx.stage,
            cost,
            qu_inf: backward.qu_inf,
            qu_w: backward.qu_w,
            eps: noise.eps,
            alpha_tol: settings.tolerance,
            ls_alpha: 0.0,
            reg,
            dyn_evals: 0,
            wall_ms: 0.0,
        };
        let finished = if settings.target_cost.is_some_and(|c| cost <= c) {
            Some(SolveStatus::TargetReached)
        } else if backward.qu_w < settings.tolerance {
            Some(SolveStatus::Converged)
        } else if iter >= settings.max_iterations {
            Some(SolveStatus::MaxIterations)
        } else {
            None
        };
        if let Some(s) = finished {
            record.dyn_evals = evals(&counter);
            record.wall_ms = wall(&start);
            records.push(record);
            status = s;
            break;
        }

        let mut accepted = None;
        for &alpha in &settings.line_search {
            let Ok((trial, trial_cost)) = forward_pass(problem, &model, &traj, &backward, alpha)
            else {
                continue;
            };
            let actual = cost - trial_cost;
            let expected = -backward.expected_change(alpha);
            if actual > 0.0 && (expected <= 0.0 || actual >= settings.acceptance_ratio * expected) {
                accepted = Some((alpha, trial, trial_cost));
                break;
            }
        }
        iter += 1;
        match accepted {
            Some((alpha, trial, trial_cost)) => {
                record.ls_alpha = alpha;
                record.dyn_evals = evals(&counter);
                record.wall_ms = wall(&start);
                records.push(record);
                reg = (reg / settings.reg_decrease).max(settings.reg_min);
                derivatives = None;
                if active {
                    epoch += 1;
                    model = SmoothedModel::new(&counter, noise, epoch, n);
                    match rollout_model(problem, &model, &trial.controls) {
                        Ok((t, c)) => {
                            traj = t;
                            cost = c;
                        }
                        Err(_) => {
                            traj = trial;
                            cost = trial_cost;
                            status = SolveStatus::Diverged;
                            break;
                        }
                    }
                } else {
                    traj = trial;
                    cost = trial_cost;
                }
            }
            None => {
                record.dyn_evals = evals(&counter);
                record.wall_ms = wall(&start);
                records.push(record);
                reg *= settings.reg_increase;
                if reg > settings.reg_max {
                    status = SolveStatus::LineSearchExhausted;
                    break;
                }
            }
        }
    }
    Ok(SolveReport {
        status,
        records,
        controls: traj.controls.clone(),
        trajectory: traj,
        feedback,
        initial_cost,
        final_cost: cost,
        dyn_evals: evals(&counter),
        final_epoch: epoch,
    })
}
