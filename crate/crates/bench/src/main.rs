use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsoc_bench::compare::compare_dirs;
use rsoc_bench::{lookup, registry, run_experiment, ExperimentConfig, RunOptions, SolverKind};

#[derive(Parser)]
#[command(name = "rsoc", version, about = "Randomized-smoothing DDP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from the registry.
    Run(RunArgs),
    /// List the registered experiments.
    List,
    /// Overlay finished runs of the same experiment.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long, env = "RSOC_OUT", default_value = "rsoc-out")]
        out: PathBuf,
        /// Skip the SVG overlay.
        #[arg(long)]
        no_plot: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    experiment: String,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_target: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    plot: bool,
    /// Output directory; defaults to `$RSOC_OUT/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from this config instead of the registry defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record measured wall time in report.csv.
    #[arg(long)]
    wall_clock: bool,
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => lookup(&args.experiment)?.default_config(),
    };
    if config.experiment != args.experiment {
        anyhow::bail!(
            "config file describes `{}` but `{}` was requested",
            config.experiment,
            args.experiment
        );
    }
    if let Some(s) = &args.solver {
        config.solver = SolverKind::parse(s)?;
    }
    if let Some(m) = args.samples {
        config.noise.samples = m;
    }
    if let Some(e) = args.eps {
        config.noise.eps = e;
    }
    if let Some(e) = args.eps_target {
        config.schedule.eps_target = Some(e);
    }
    if let Some(r) = args.rho {
        config.schedule.rho = r;
    }
    if let Some(g) = args.gamma {
        config.schedule.gamma = g;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let out = match args.out {
        Some(o) => o,
        None => std::env::var_os("RSOC_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("rsoc-out"))
            .join(&config.experiment),
    };
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()?;
    }
    let outcome = run_experiment(
        &config,
        &RunOptions {
            out: out.clone(),
            plot: args.plot,
            wall_clock: args.wall_clock,
        },
    )?;
    for r in &outcome.runs {
        println!(
            "{:<12} {:<22} iters={:<4} evals={:<9} qu_inf={:.3e} cost={:.6e} goal_distance={:.4} {}",
            r.label,
            r.report.status.to_string(),
            r.report.iterations(),
            r.report.dyn_evals,
            r.final_qu_inf(),
            r.cost,
            r.goal_distance,
            if r.success { "ok" } else { "missed" }
        );
    }
    println!("wrote {}", out.display());
    Ok(outcome.success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for e in registry() {
                println!("{:<22} {}", e.name, e.doc);
            }
            Ok(true)
        }
        Command::Compare { dirs, out, no_plot } => compare_dirs(&dirs, &out, !no_plot)
            .map(|_| {
                println!("wrote {}", out.display());
                true
            })
            .map_err(Into::into),
        Command::Run(args) => run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
