//! Command-line front end for the `morrey-core` experiments.

pub mod config;
pub mod report;
pub mod runners;

use std::path::PathBuf;

use config::{ExperimentConfig, Kind, Overrides};
use report::Check;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] morrey_core::Error),
}

/// Exit status of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CheckFailed = 1,
    ConfigError = 2,
}

/// What one invocation produced.
#[derive(Debug)]
pub struct RunResult {
    pub checks: Vec<Check>,
    pub failing_rows: usize,
    pub written: report::Written,
}

impl RunResult {
    pub fn status(&self) -> Status {
        if self.checks.iter().all(|c| c.pass) {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }
}

/// Loads (or defaults) the configuration, applies overrides, runs and writes.
/// `expected` is the kind implied by the subcommand, if any.
pub fn execute(config: Option<&PathBuf>, expected: Option<Kind>, o: &Overrides) -> Result<RunResult, CliError> {
    let mut cfg = match (config, expected) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(k)) => ExperimentConfig::for_kind(k),
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(k) = expected {
        if cfg.kind != k {
            return Err(CliError::Config(format!(
                "kind: config declares {} but the subcommand runs {}",
                cfg.kind.name(),
                k.name()
            )));
        }
    }
    cfg.apply(o);
    let e = cfg.validate()?;
    let out = runners::run(&cfg, &e)?;
    let written = report::write(&cfg.output.dir, &cfg, &out.rows, &out.checks, &out.report)?;
    Ok(RunResult { failing_rows: report::failing_rows(&out.rows).len(), checks: out.checks, written })
}
