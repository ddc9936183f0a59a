//! Trajectory optimization for nonsmooth dynamical systems: DDP/iLQR,
//! randomized smoothing of the dynamics, an adaptive noise cascade and a
//! trajectory-level zero-th order baseline, plus planar benchmark models
//! with dry friction and unilateral contact.

pub mod adaptive;
pub mod contact;
pub mod cost;
pub mod ddp;
pub mod dynamics;
pub mod error;
pub mod models;
pub mod problem;
pub mod report;
pub mod smoothing;
pub mod zeroth;

pub use adaptive::{solve_adaptive, AdaptiveReport, AdaptiveSchedule};
pub use cost::{QuadraticCost, QuadraticGoalCost, RunningCost, TaskMap, TerminalCost};
pub use ddp::{solve, SolverSettings};
pub use dynamics::{finite_diff_jacobians, Dynamics, LinearDynamics};
pub use error::*;
pub use problem::{rollout, total_cost, Trajectory, TrajectoryProblem};
pub use report::{IterationRecord, SolveReport, SolveStatus};
pub use smoothing::{GradientEstimator, NoiseConfig};
pub use zeroth::{solve_zeroth, ZerothOrderSettings};
