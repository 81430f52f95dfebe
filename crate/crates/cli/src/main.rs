use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradmap_core::lab::{self, ExperimentConfig, Task};
use gradmap_core::GradmapError;

#[derive(Parser)]
#[command(name = "gradmap", version, about = "Seeded experiment runner for gradient maps on Grassmannians")]
struct Cli {
    #[command(subcommand)]
    task: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Moment map identities, equivariance and scenario hypotheses.
    Validate(RunArgs),
    /// Negative gradient flow of the norm square.
    Flow(RunArgs),
    /// Maximal weights along one-parameter subgroups.
    Weight(RunArgs),
    /// Stability classification with torus cross-checks.
    Classify(RunArgs),
    /// Stratum census at n and 2n samples.
    Strata(RunArgs),
    /// Chamber image hull and midpoint deficits.
    Polytope(RunArgs),
    /// Semistable fraction and kNN connectivity.
    Density(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to `output_dir` in the config, then `out/<task>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Task, RunArgs) {
        match self {
            Command::Validate(a) => (Task::Validate, a),
            Command::Flow(a) => (Task::Flow, a),
            Command::Weight(a) => (Task::Weight, a),
            Command::Classify(a) => (Task::Classify, a),
            Command::Strata(a) => (Task::Strata, a),
            Command::Polytope(a) => (Task::Polytope, a),
            Command::Density(a) => (Task::Density, a),
        }
    }
}

fn load(task: Task, args: &RunArgs) -> Result<ExperimentConfig, GradmapError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = lab::parse_config(&text)?;
    if cfg.task != task {
        return Err(GradmapError::Config {
            line: 1,
            message: format!("config task is `{}` but subcommand is `{}`", cfg.task.as_str(), task.as_str()),
        });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (task, args) = Cli::parse().task.split();
    let cfg = match load(task, &args) {
        Ok(c) => c,
        Err(e @ GradmapError::Config { .. }) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(1);
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(task.as_str()));
    match lab::run(&cfg, &out) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            println!("{:#}", m.summary);
            eprintln!(
                "{}: {} samples, {} failures, {} files in {}",
                task.as_str(),
                m.n_samples_total,
                m.failures.len(),
                m.outputs.len(),
                out.display()
            );
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
