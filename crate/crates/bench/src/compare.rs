//! Overlays of several runs of the same experiment.

use std::fs;
use std::path::{Path, PathBuf};

use rsoc_core::report::IterationRecord;

use crate::config::ExperimentConfig;
use crate::output::{plot_svg, read_report, Series};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledReport {
    pub label: String,
    pub records: Vec<IterationRecord>,
}

/// Writes `compare.csv` (long format keyed by run label and iteration) and,
/// if asked, `compare.svg` with cost and `‖Q_u‖_∞` against iterations and
/// against cumulative dynamics evaluations.
pub fn write_comparison(out: &Path, runs: &[LabeledReport], plot: bool) -> Result<(), BenchError> {
    let path = out.join("compare.csv");
    let mut w =
        csv::Writer::from_path(&path).map_err(|e| BenchError::Csv(path.clone(), e.to_string()))?;
    let mut header = vec!["run"];
    header.extend(rsoc_core::report::REPORT_HEADER);
    w.write_record(&header)
        .map_err(|e| BenchError::Csv(path.clone(), e.to_string()))?;
    for run in runs {
        for r in &run.records {
            w.write_record([
                run.label.clone(),
                r.iter.to_string(),
                r.stage.to_string(),
                r.cost.to_string(),
                r.qu_inf.to_string(),
                r.qu_w.to_string(),
                r.eps.to_string(),
                r.alpha_tol.to_string(),
                r.ls_alpha.to_string(),
                r.reg.to_string(),
                r.dyn_evals.to_string(),
                r.wall_ms.to_string(),
            ])
            .map_err(|e| BenchError::Csv(path.clone(), e.to_string()))?;
        }
    }
    w.flush().map_err(|e| BenchError::Io(path.clone(), e))?;
    if plot {
        let by = |x: fn(&IterationRecord) -> f64, y: fn(&IterationRecord) -> f64| -> Vec<Series> {
            runs.iter()
                .map(|run| Series {
                    label: &run.label,
                    points: run.records.iter().map(|r| (x(r), y(r))).collect(),
                })
                .collect()
        };
        plot_svg(
            &out.join("compare.svg"),
            &by(|r| r.iter as f64, |r| r.cost),
            &by(|r| r.iter as f64, |r| r.qu_inf),
            &[],
            "iteration",
        )?;
        plot_svg(
            &out.join("compare_evals.svg"),
            &by(|r| r.dyn_evals as f64, |r| r.cost),
            &by(|r| r.dyn_evals as f64, |r| r.qu_inf),
            &[],
            "dynamics evaluations",
        )?;
    }
    Ok(())
}

/// Reads finished run directories and overlays them. All runs must come
/// from the same experiment.
pub fn compare_dirs(
    dirs: &[PathBuf],
    out: &Path,
    plot: bool,
) -> Result<Vec<LabeledReport>, BenchError> {
    if dirs.len() < 2 {
        return Err(BenchError::Compare(
            "at least two run directories are needed".into(),
        ));
    }
    let mut experiment: Option<String> = None;
    let mut runs = Vec::new();
    for dir in dirs {
        let config = ExperimentConfig::load(&dir.join("config.resolved"))?;
        match &experiment {
            None => experiment = Some(config.experiment.clone()),
            Some(e) if *e != config.experiment => {
                return Err(BenchError::Compare(format!(
                    "cannot compare `{e}` with `{}` ({})",
                    config.experiment,
                    dir.display()
                )))
            }
            Some(_) => {}
        }
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| config.solver.as_str().to_string());
        runs.push(LabeledReport {
            label,
            records: read_report(&dir.join("report.csv"))?,
        });
    }
    fs::create_dir_all(out).map_err(|e| BenchError::Io(out.to_path_buf(), e))?;
    write_comparison(out, &runs, plot)?;
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverKind;
    use crate::experiments::lookup;
    use crate::runner::{run_experiment, RunOptions};

    fn run_into(dir: &Path, name: &str) {
        let mut c = lookup(name).unwrap().default_config();
        c.solver = SolverKind::Ddp;
        c.horizon = 10;
        c.ddp.max_iterations = 2;
        run_experiment(
            &c,
            &RunOptions {
                out: dir.to_path_buf(),
                ..Default::default()
            },
        )
        .unwrap();
    }

    #[test]
    fn identical_runs_give_identical_curves() {
        let root = tempfile::tempdir().unwrap();
        let (a, b) = (root.path().join("a"), root.path().join("b"));
        run_into(&a, "cube-lift");
        run_into(&b, "cube-lift");
        let runs = compare_dirs(&[a, b], &root.path().join("cmp"), true).unwrap();
        assert_eq!(runs[0].records, runs[1].records);
        assert!(root.path().join("cmp/compare.csv").exists());
        assert!(root.path().join("cmp/compare.svg").exists());
    }

    #[test]
    fn mismatched_experiments_are_rejected() {
        let root = tempfile::tempdir().unwrap();
        let (a, b) = (root.path().join("a"), root.path().join("b"));
        run_into(&a, "cube-lift");
        run_into(&b, "cube-slide");
        let err = compare_dirs(&[a, b], &root.path().join("cmp"), false).unwrap_err();
        assert!(matches!(err, BenchError::Compare(_)));
    }
}
