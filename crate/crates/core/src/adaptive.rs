//! Cascade of smoothed sub-problems with geometrically shrinking noise and
//! tolerance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ddp::{solve, solve_in_context, SolveContext, SolverSettings};
use crate::error::ProblemError;
use crate::problem::TrajectoryProblem;
use crate::report::{SolveReport, SolveStatus};
use crate::smoothing::NoiseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveSchedule {
    pub eps0: f64,
    pub alpha0: f64,
    /// Defaults to `eps0 / 16`.
    pub eps_target: Option<f64>,
    /// Defaults to `alpha0 / 16`.
    pub alpha_target: Option<f64>,
    pub rho: f64,
    pub gamma: f64,
    /// Inner iterations allowed per sub-problem before the schedule moves on.
    pub stall_budget: usize,
    /// Cap on inner iterations summed over all sub-problems.
    pub max_total_iterations: Option<usize>,
}

impl Default for AdaptiveSchedule {
    fn default() -> Self {
        Self {
            eps0: 0.1,
            alpha0: 1e-2,
            eps_target: None,
            alpha_target: None,
            rho: 2.0,
            gamma: 2.0,
            stall_budget: 50,
            max_total_iterations: None,
        }
    }
}

impl AdaptiveSchedule {
    pub fn eps_target(&self) -> f64 {
        self.eps_target.unwrap_or(self.eps0 / 16.0)
    }

    pub fn alpha_target(&self) -> f64 {
        self.alpha_target.unwrap_or(self.alpha0 / 16.0)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |msg: &str| Err(ProblemError::InvalidInput(msg.into()));
        if !(self.rho > 1.0 && self.gamma > 1.0) {
            return bad("shrink factors rho and gamma must exceed 1");
        }
        if !(self.eps0 >= 0.0 && self.alpha0 > 0.0) {
            return bad("eps0 must be >= 0 and alpha0 > 0");
        }
        if self.eps0 > 0.0 && !(self.eps_target() > 0.0 && self.eps_target() <= self.eps0) {
            return bad("eps target must lie in (0, eps0]");
        }
        if !(self.alpha_target() > 0.0 && self.alpha_target() <= self.alpha0) {
            return bad("alpha target must lie in (0, alpha0]");
        }
        if self.stall_budget == 0 {
            return bad("stall budget must be positive");
        }
        Ok(())
    }

    /// `(ε_k, α_k)` of every sub-problem the cascade will visit.
    pub fn stages(&self) -> Vec<(f64, f64)> {
        let (eps_star, alpha_star) = (self.eps_target(), self.alpha_target());
        let (mut eps, mut alpha) = (self.eps0, self.alpha0);
        let mut out = Vec::new();
        loop {
            out.push((eps, alpha));
            eps /= self.rho;
            alpha /= self.gamma;
            if eps <= eps_star && alpha <= alpha_star {
                return out;
            }
        }
    }
}

/// Outcome of one sub-problem.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: usize,
    pub eps: f64,
    pub alpha_tol: f64,
    /// Index of the sub-problem's first row in the concatenated log.
    pub first_row: usize,
    pub rows: usize,
    pub status: SolveStatus,
    /// The sub-problem ran out of its iteration budget before reaching
    /// `alpha_tol`.
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveReport {
    /// Concatenated log; `status`, controls and trajectory are the final
    /// sub-problem's.
    pub report: SolveReport,
    pub stages: Vec<StageSummary>,
}

/// Solves successively less smoothed problems, warm-starting each from the
/// previous solution and drawing fresh samples at every boundary.
///
/// With `eps0 = 0` this is plain DDP with `settings`.
pub fn solve_adaptive(
    problem: &TrajectoryProblem,
    initial_controls: &[DVector<f64>],
    schedule: &AdaptiveSchedule,
    settings: &SolverSettings,
    noise: &NoiseConfig,
) -> Result<AdaptiveReport, ProblemError> {
    schedule.validate()?;
    if schedule.eps0 == 0.0 {
        let report = solve(problem, initial_controls, settings, None)?;
        let stages = vec![StageSummary {
            stage: 0,
            eps: 0.0,
            alpha_tol: settings.tolerance,
            first_row: 0,
            rows: report.records.len(),
            status: report.status,
            stalled: report.status == SolveStatus::MaxIterations,
        }];
        return Ok(AdaptiveReport { report, stages });
    }

    let mut controls = initial_controls.to_vec();
    let mut records = Vec::new();
    let mut stages = Vec::new();
    let mut ctx = SolveContext::default();
    let mut steps_used = 0usize;
    let mut last: Option<SolveReport> = None;
    let mut initial_cost = None;
    for (stage, (eps, alpha_tol)) in schedule.stages().into_iter().enumerate() {
        let mut budget = schedule.stall_budget;
        if let Some(total) = schedule.max_total_iterations {
            if steps_used >= total {
                break;
            }
            budget = budget.min(total - steps_used);
        }
        let inner = SolverSettings {
            max_iterations: budget,
            tolerance: alpha_tol,
            ..settings.clone()
        };
        ctx.stage = stage;
        let report =
            solve_in_context(problem, &controls, &inner, Some(&noise.with_eps(eps)), &ctx)?;
        initial_cost.get_or_insert(report.initial_cost);
        // the final row of a sub-problem takes no step
        steps_used += report.records.len().saturating_sub(1);
        stages.push(StageSummary {
            stage,
            eps,
            alpha_tol,
            first_row: records.len(),
            rows: report.records.len(),
            status: report.status,
            stalled: report.status == SolveStatus::MaxIterations,
        });
        ctx.iter_offset += report.records.len();
        ctx.eval_offset = report.dyn_evals;
        ctx.wall_offset_ms = report.last().map_or(ctx.wall_offset_ms, |r| r.wall_ms);
        ctx.start_epoch = report.final_epoch + 1;
        records.extend(report.records.iter().cloned());
        controls = report.controls.clone();
        let stop = matches!(
            report.status,
            SolveStatus::Diverged | SolveStatus::BackwardPassFailed | SolveStatus::TargetReached
        );
        last = Some(report);
        if stop {
            break;
        }
    }
    let mut report = last.expect("the schedule has at least one stage");
    report.records = records;
    report.initial_cost = initial_cost.unwrap_or(report.initial_cost);
    Ok(AdaptiveReport { report, stages })
}
