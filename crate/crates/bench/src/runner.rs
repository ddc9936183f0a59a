//! Executes experiment configs and writes their artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rsoc_core::adaptive::solve_adaptive;
use rsoc_core::ddp::closed_loop_rollout;
use rsoc_core::report::{SolveReport, SolveStatus};
use rsoc_core::{rollout, solve, solve_zeroth, total_cost, Trajectory};

use crate::compare::{write_comparison, LabeledReport};
use crate::config::{ExperimentConfig, SolverKind};
use crate::experiments::{build, lookup, ExperimentKind};
use crate::output::{plot_svg, write_report, write_trajectory, Series};
use crate::BenchError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub plot: bool,
    /// Keep measured wall time in `report.csv`; off by default so that
    /// reports are reproducible byte for byte.
    pub wall_clock: bool,
}

/// One solver run, judged on the raw dynamics.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub solver: SolverKind,
    pub report: SolveReport,
    /// Rows where a new noise stage starts.
    pub stage_starts: Vec<usize>,
    /// The returned policy rolled out on the raw dynamics.
    pub rollout: Trajectory,
    pub cost: f64,
    pub goal_distance: f64,
    pub success: bool,
}

impl RunOutcome {
    pub fn final_qu_inf(&self) -> f64 {
        self.report.last().map_or(f64::NAN, |r| r.qu_inf)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub success: bool,
}

/// Solves a single-run config without touching the filesystem.
pub fn solve_config(config: &ExperimentConfig) -> Result<RunOutcome, BenchError> {
    config.validate()?;
    let setup = build(config)?;
    let problem = &setup.problem;
    let u0 = &setup.initial_controls;
    let solver_err = |e: rsoc_core::ProblemError| BenchError::Solver(e.to_string());
    let (report, stage_starts) = match config.solver {
        SolverKind::Ddp => (
            solve(problem, u0, &config.ddp, None).map_err(solver_err)?,
            vec![],
        ),
        SolverKind::RddpFixed => {
            let noise = config.noise_config();
            (
                solve(problem, u0, &config.ddp, Some(&noise)).map_err(solver_err)?,
                vec![],
            )
        }
        SolverKind::Rddp => {
            let r = solve_adaptive(
                problem,
                u0,
                &config.adaptive_schedule(),
                &config.ddp,
                &config.noise_config(),
            )
            .map_err(solver_err)?;
            let starts = r.stages.iter().skip(1).map(|s| s.first_row).collect();
            (r.report, starts)
        }
        SolverKind::Zeroth => (
            solve_zeroth(problem, u0, &config.zeroth_settings()).map_err(solver_err)?,
            vec![],
        ),
    };

    let dynamics = &**problem.dynamics();
    let x0 = problem.initial_state();
    let closed = if report.feedback.len() == problem.horizon() {
        closed_loop_rollout(dynamics, x0, &report.trajectory, &report.feedback).ok()
    } else {
        None
    };
    let raw = match closed {
        Some(t) => Some(t),
        None => rollout(dynamics, x0, &report.controls).ok(),
    };
    let (rollout, cost, goal_distance) = match raw {
        Some(t) => {
            let cost = total_cost(problem, &t).unwrap_or(f64::INFINITY);
            let d = setup.goal.goal_distance(t.final_state());
            (t, cost, d)
        }
        None => (report.trajectory.clone(), f64::INFINITY, f64::INFINITY),
    };
    let s = &config.success;
    let success = report.status != SolveStatus::Diverged
        && cost.is_finite()
        && s.goal_distance.is_none_or(|d| goal_distance <= d)
        && s.cost.is_none_or(|c| cost <= c);
    Ok(RunOutcome {
        label: config.solver.as_str().to_string(),
        solver: config.solver,
        report,
        stage_starts,
        rollout,
        cost,
        goal_distance,
        success,
    })
}

fn create_dir(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::Io(dir.to_path_buf(), e))
}

fn write_run(
    dir: &Path,
    config: &ExperimentConfig,
    run: &RunOutcome,
    opts: &RunOptions,
) -> Result<(), BenchError> {
    create_dir(dir)?;
    write_report(
        &dir.join("report.csv"),
        &run.report.records,
        opts.wall_clock,
    )?;
    write_trajectory(&dir.join("trajectory.csv"), &run.rollout, config.model.dt())?;
    let resolved = dir.join("config.resolved");
    fs::write(&resolved, config.to_toml()).map_err(|e| BenchError::Io(resolved, e))?;
    if opts.plot {
        let series = |f: fn(&rsoc_core::report::IterationRecord) -> f64| {
            vec![Series {
                label: &run.label,
                points: run
                    .report
                    .records
                    .iter()
                    .map(|r| (r.iter as f64, f(r)))
                    .collect(),
            }]
        };
        let rules: Vec<f64> = run.stage_starts.iter().map(|&i| i as f64).collect();
        plot_svg(
            &dir.join("plot.svg"),
            &series(|r| r.cost),
            &series(|r| r.qu_inf),
            &rules,
            "iteration",
        )?;
    }
    Ok(())
}

fn write_summary(path: &Path, runs: &[RunOutcome]) -> Result<(), BenchError> {
    let mut text = String::from(
        "label,solver,status,iterations,dyn_evals,final_qu_inf,cost,goal_distance,success\n",
    );
    for r in runs {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.label,
            r.solver.as_str(),
            r.report.status,
            r.report.iterations(),
            r.report.dyn_evals,
            r.final_qu_inf(),
            r.cost,
            r.goal_distance,
            r.success
        ));
    }
    fs::write(path, text).map_err(|e| BenchError::Io(path.to_path_buf(), e))
}

/// Runs an experiment config end to end and writes its artifacts under
/// `opts.out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutcome, BenchError> {
    config.validate()?;
    let kind = lookup(&config.experiment)?.kind;
    let out = &opts.out;
    create_dir(out)?;
    match kind {
        ExperimentKind::Single => {
            let run = solve_config(config)?;
            write_run(out, config, &run, opts)?;
            let success = run.success;
            Ok(ExperimentOutcome {
                runs: vec![run],
                success,
            })
        }
        ExperimentKind::SampleSweep => {
            let counts = config
                .sweep
                .clone()
                .unwrap_or_else(|| vec![config.noise.samples]);
            let mut runs = Vec::new();
            for m in counts {
                let mut c = config.clone();
                c.sweep = None;
                c.noise.samples = m;
                let mut run = solve_config(&c)?;
                run.label = format!("M{m}");
                write_run(&out.join(&run.label), &c, &run, opts)?;
                runs.push(run);
            }
            finish_composite(config, opts, runs, |runs| runs.iter().all(|r| r.success))
        }
        ExperimentKind::SolverComparison => {
            let solvers = config
                .compare
                .clone()
                .unwrap_or_else(|| vec![config.solver]);
            let mut runs = Vec::new();
            for s in solvers {
                let mut c = config.clone();
                c.compare = None;
                c.solver = s;
                let run = solve_config(&c)?;
                write_run(&out.join(&run.label), &c, &run, opts)?;
                runs.push(run);
            }
            finish_composite(config, opts, runs, adaptive_wins)
        }
    }
}

/// The adaptive run, if present, must succeed, end with a lower `‖Q_u‖_∞`
/// than the other smoothed runs and a lower cost than every other run.
/// Plain DDP is left out of the `‖Q_u‖_∞` ranking: stalled on a contact
/// plateau its gradient is exactly zero.
fn adaptive_wins(runs: &[RunOutcome]) -> bool {
    let Some(adaptive) = runs.iter().find(|r| r.solver == SolverKind::Rddp) else {
        return runs.iter().all(|r| r.success);
    };
    let others = || runs.iter().filter(|r| r.solver != SolverKind::Rddp);
    adaptive.success
        && others().all(|r| adaptive.cost < r.cost)
        && others()
            .filter(|r| r.solver != SolverKind::Ddp)
            .all(|r| adaptive.final_qu_inf() < r.final_qu_inf())
}

fn finish_composite(
    config: &ExperimentConfig,
    opts: &RunOptions,
    runs: Vec<RunOutcome>,
    judge: fn(&[RunOutcome]) -> bool,
) -> Result<ExperimentOutcome, BenchError> {
    let out = &opts.out;
    let resolved = out.join("config.resolved");
    fs::write(&resolved, config.to_toml()).map_err(|e| BenchError::Io(resolved, e))?;
    write_summary(&out.join("summary.csv"), &runs)?;
    let labeled: Vec<LabeledReport> = runs
        .iter()
        .map(|r| LabeledReport {
            label: r.label.clone(),
            records: if opts.wall_clock {
                r.report.records.clone()
            } else {
                r.report.timeless_records()
            },
        })
        .collect();
    write_comparison(out, &labeled, opts.plot)?;
    let success = judge(&runs);
    Ok(ExperimentOutcome { runs, success })
}
