//! Library side of the `lmc` command: configuration, output files, task
//! runners and the oracle suite behind `lmc validate`.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod tasks;
pub mod validation;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{OutputDir, RunMeta};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", format_config_errors(.0))]
    Config(Vec<ConfigError>),
    #[error("{0}")]
    Input(String),
    #[error("assumption check failed: {0}")]
    Assumption(String),
    #[error(transparent)]
    Model(#[from] levy_malliavin::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn format_config_errors(errs: &[ConfigError]) -> String {
    let lines: Vec<String> = errs.iter().map(|e| format!("config error: {e}")).collect();
    lines.join("\n")
}

impl CliError {
    /// 2 for anything rejected before simulation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Assumption(_) => 2,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Reads and validates a configuration file and applies the overrides.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let source =
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml(&source).map_err(CliError::Config)?;
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(o) = &overrides.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

/// Runs `task` from the configuration at `path`. Returns whether the task's
/// checks passed.
pub fn execute(task: &str, path: &Path, overrides: &Overrides) -> Result<bool, CliError> {
    let cfg = load_config(path, overrides)?;
    if cfg.task.name() != task {
        return Err(CliError::Input(format!(
            "{} describes a `{}` task, not `{task}`",
            path.display(),
            cfg.task.name()
        )));
    }
    let config_dir = path.parent().unwrap_or(Path::new("."));
    let meta = RunMeta::new(cfg.hash(), cfg.seed);
    let mut out = OutputDir::create(&cfg.output_dir, meta)?;
    let passed = tasks::run(&cfg, config_dir, &mut out)?;
    out.record("done", &serde_json::json!({ "passed": passed }))?;
    let written = out.finish()?;
    println!("wrote {} files to {}", written.len(), cfg.output_dir.display());
    Ok(passed)
}
