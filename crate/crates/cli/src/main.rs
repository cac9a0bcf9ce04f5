use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kflow::acceptance::run_acceptance;
use kflow::commands::{cmd_entropy, cmd_flow, cmd_heatback, cmd_lgeo};
use kflow::output::RunManifest;
use kflow::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kflow", about = "Ricci flow on the two-sphere and its monotone quantities")]
struct Cli {
    /// `key = value` configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial metric and write the trajectory.
    Flow,
    /// Solve the conjugate heat equation backward along a trajectory.
    Heatback {
        #[arg(long)]
        traj: PathBuf,
    },
    /// Entropy, admissibility and Harnack diagnostics of a solution.
    Entropy {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        sol: PathBuf,
    },
    /// Reduced distance fields and inequality residuals.
    Lgeo {
        #[arg(long)]
        traj: PathBuf,
    },
    /// Run every acceptance criterion and print one line per criterion.
    Acceptance,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)
        }
    }
}

fn run(cli: Cli) -> Result<RunManifest, CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Flow => cmd_flow(&cfg, out),
        Command::Heatback { traj } => cmd_heatback(&cfg, &traj, out),
        Command::Entropy { traj, sol } => cmd_entropy(&cfg, &traj, &sol, out),
        Command::Lgeo { traj } => cmd_lgeo(&cfg, &traj, out),
        Command::Acceptance => {
            let (manifest, lines) = run_acceptance(&cfg, out)?;
            for l in lines {
                println!("{l}");
            }
            Ok(manifest)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(m) => {
            eprintln!("wrote {} files in {:.1}s", m.artifacts.len(), m.wall_clock_seconds);
            if m.checks.iter().all(|c| c.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
