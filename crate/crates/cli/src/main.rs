use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use isaacs_cli::{load, run, CliError, Command};

/// Solve, simulate and check zero-sum jump-diffusion games from a TOML run config.
#[derive(Debug, Parser)]
#[command(name = "isaacs", version)]
struct Args {
    command: Command,
    /// Run config (a previous run's `.manifest` works too).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set mc.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
    /// Output file stem; defaults to the command name.
    #[arg(long)]
    name: Option<String>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: &Args) -> Result<String, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io { path: args.config.clone(), source: e })?;
    let cfg = load(&text, &args.overrides)?;
    let stem = args.name.clone().unwrap_or_else(|| args.command.name().to_string());
    run(args.command, &cfg, &args.out, &stem)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
