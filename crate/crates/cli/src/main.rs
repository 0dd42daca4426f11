//! `sbb`: batch front end for the Schrödinger–Bridge–Bass grid solver.
//!
//! Exit codes: 0 success, 1 configuration or IO error, 2 solver did not converge,
//! 3 degraded solution or failed duality check, 4 at least one sweep row failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbb_core::SbbError;

use config::{parse_beta_list, RunConfig};

#[derive(Parser)]
#[command(name = "sbb", version, about = "Grid solver for the one-dimensional Schrödinger–Bridge–Bass problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the dual problem and write the solution directory.
    Solve(Common),
    /// Simulate the optimal process from a solution directory and check strong duality.
    Simulate(Common),
    /// Rebuild a solution directory and rerun the structural checks.
    Validate(Common),
    /// Solve and simulate over a list of (beta, T) pairs.
    SweepBeta(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; for simulate and validate, the solution directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated beta values, each optionally `beta:T`.
    #[arg(long)]
    beta: Option<String>,
    /// Dump up to 1000 simulated trajectories.
    #[arg(long)]
    emit_paths: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, SbbError> {
        let path = self.config.as_ref().ok_or_else(|| SbbError::InvalidConfig("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(p) = self.paths {
            cfg.paths = p;
        }
        if let Some(s) = self.seed {
            cfg.solver.seed = s;
        }
        if let Some(list) = &self.beta {
            cfg.sweep = parse_beta_list(list, cfg.solver.horizon)?;
        }
        cfg.emit_paths |= self.emit_paths;
        Ok(cfg)
    }

    /// Solution directory for simulate and validate: `--out`, else the config's `out`.
    fn solution_dir(&self, cfg: Option<&RunConfig>) -> Result<PathBuf, SbbError> {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out.clone()))
            .ok_or_else(|| SbbError::InvalidConfig("no solution directory (pass --out)".into()))
    }
}

fn run(cli: Cli) -> Result<u8, SbbError> {
    match cli.command {
        Command::Solve(c) => commands::solve(&c.load()?),
        Command::Simulate(c) => {
            let cfg = c.config.as_ref().map(|_| c.load()).transpose()?;
            let dir = c.solution_dir(cfg.as_ref())?;
            commands::simulate(&dir, cfg.as_ref(), c.paths, c.seed, c.emit_paths)
        }
        Command::Validate(c) => {
            let cfg = c.config.as_ref().map(|_| c.load()).transpose()?;
            commands::validate(&c.solution_dir(cfg.as_ref())?)
        }
        Command::SweepBeta(c) => commands::sweep(&c.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
