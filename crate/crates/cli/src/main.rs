use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use levy_malliavin_cli::{execute, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    Simulate,
    Density,
    Score,
    Fisher,
    Mle,
    Crlb,
    Validate,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Density => "density",
            Task::Score => "score",
            Task::Fisher => "fisher",
            Task::Mle => "mle",
            Task::Crlb => "crlb",
            Task::Validate => "validate",
        }
    }
}

/// Malliavin-weight Monte Carlo for Levy-driven SDEs.
#[derive(Debug, Parser)]
#[command(name = "lmc", version)]
struct Args {
    /// Task to run; must match `task.kind` in the configuration.
    #[arg(value_enum)]
    task: Task,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
    };
    match execute(args.task.name(), &args.config, &overrides) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some checks failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
