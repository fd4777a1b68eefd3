//! Batch front end for the isaacs-core solver, simulator and analysis tools.
//!
//! Every run reads a TOML config (plus `--set key.path=value` overrides),
//! writes its artifacts under one stem, and records the fully resolved
//! config as `<stem>.manifest`. Feeding a manifest back in as the config
//! reproduces the run byte for byte.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

pub use config::{load, RunConfig};

pub const TOOL_VERSION: &str = concat!("isaacs ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config at `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("{section}: {source}")]
    Core {
        section: &'static str,
        #[source]
        source: isaacs_core::Error,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn missing(key: &str) -> Self {
        CliError::Validation { key: key.into(), message: "required key is missing".into() }
    }

    pub fn invalid(section: &'static str, source: isaacs_core::Error) -> Self {
        CliError::Core { section, source }
    }

    /// 2 for anything traceable to the config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Core { source, .. } => match source {
                isaacs_core::Error::CflViolation { .. } => 1,
                _ => 2,
            },
            CliError::Io { .. } | CliError::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    IsaacsCheck,
    Simulate,
    Payoff,
    ValuePi,
    DppCheck,
    Verify,
    Moments,
    Audit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::IsaacsCheck => "isaacs-check",
            Command::Simulate => "simulate",
            Command::Payoff => "payoff",
            Command::ValuePi => "value-pi",
            Command::DppCheck => "dpp-check",
            Command::Verify => "verify",
            Command::Moments => "moments",
            Command::Audit => "audit",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(
            self,
            Command::IsaacsCheck | Command::Simulate | Command::Payoff | Command::Verify | Command::Moments | Command::Audit
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Files produced by one command, keyed by extension.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub summary: String,
}

impl Artifacts {
    pub fn add(&mut self, ext: &'static str, bytes: Vec<u8>) {
        self.files.push((ext, bytes));
    }
}

/// Runs `command` and writes `<out_dir>/<stem>.*`. Returns the summary text.
pub fn run(command: Command, cfg: &RunConfig, out_dir: &Path, stem: &str) -> Result<String, CliError> {
    if command.stochastic() {
        cfg.seed()?;
    }
    let artifacts = commands::dispatch(command, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io { path: out_dir.into(), source: e })?;
    let manifest = output::manifest(command, cfg)?;
    let mut files = vec![("manifest", manifest.into_bytes())];
    files.extend(artifacts.files);
    for (ext, bytes) in files {
        let path = out_dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, bytes).map_err(|e| CliError::Io { path, source: e })?;
    }
    Ok(artifacts.summary)
}
