//! Per-iteration solver logs shared by every solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::Trajectory;

/// Column names of the iteration log, in order.
pub const REPORT_HEADER: [&str; 11] = [
    "iter",
    "stage",
    "cost",
    "qu_inf",
    "qu_w",
    "eps",
    "alpha_tol",
    "ls_alpha",
    "reg",
    "dyn_evals",
    "wall_ms",
];

/// One row of the iteration log.
///
/// A row describes the reference trajectory at the start of iteration
/// `iter`: its cost, the gradient norms of the backward pass computed
/// around it, and the line-search step that was accepted from it (`0` when
/// no step was taken).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub stage: usize,
    pub cost: f64,
    pub qu_inf: f64,
    pub qu_w: f64,
    pub eps: f64,
    pub alpha_tol: f64,
    pub ls_alpha: f64,
    pub reg: f64,
    /// Cumulative dynamics evaluations, including this iteration's.
    pub dyn_evals: u64,
    pub wall_ms: f64,
}

impl IterationRecord {
    /// Same record with the wall-clock column cleared.
    pub fn without_wall_time(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// The termination norm fell below tolerance.
    Converged,
    MaxIterations,
    /// No line-search step was accepted even at maximal regularization.
    LineSearchExhausted,
    /// `Q_uu` could not be made positive definite.
    BackwardPassFailed,
    /// The initial rollout, or every sampled rollout, diverged.
    Diverged,
    /// The cost reached the requested target.
    TargetReached,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::LineSearchExhausted => "line-search-exhausted",
            SolveStatus::BackwardPassFailed => "backward-pass-failed",
            SolveStatus::Diverged => "diverged",
            SolveStatus::TargetReached => "target-reached",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub records: Vec<IterationRecord>,
    /// Final open-loop controls.
    pub controls: Vec<DVector<f64>>,
    /// Reference trajectory of the final controls under the final samples.
    pub trajectory: Trajectory,
    /// Feedback gains of the last backward pass; empty if none succeeded.
    pub feedback: Vec<DMatrix<f64>>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub dyn_evals: u64,
    /// Noise epoch in effect at the end of the solve.
    pub final_epoch: u64,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Records with wall time removed, for reproducibility checks.
    pub fn timeless_records(&self) -> Vec<IterationRecord> {
        self.records
            .iter()
            .map(IterationRecord::without_wall_time)
            .collect()
    }
}
