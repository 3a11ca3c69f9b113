//! Experiment driver behind the `nfula` binary: config parsing, problem
//! setup and the subcommands.

pub mod commands;
pub mod config;
pub mod problem;
pub mod verify;

use std::fmt;

pub use config::{ConfigError, ExperimentConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "NFL_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Core(nfula::Error),
    /// Some checks or chains failed; the details were already reported.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) | CliError::Core(_) => 1,
            CliError::Config(_) | CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<nfula::Error> for CliError {
    fn from(e: nfula::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// Parses a `NFL_THREADS` value; `None` leaves the default pool size.
pub fn parse_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Sizes the global rayon pool from `NFL_THREADS`.
pub fn init_threads() -> Result<(), CliError> {
    let v = std::env::var(THREADS_ENV).ok();
    if let Some(n) = parse_threads(v.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}
