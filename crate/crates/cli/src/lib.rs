//! `precnorm` command-line harness: seeded runs, invariance certification,
//! learning-rate sweeps and self-checks.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod selfcheck;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Command, ExperimentConfig, Settings};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "precnorm", version = output::version(), about = "Optimizers as preconditioned-norm steepest descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON file with flat configuration keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train every optimizer on every seed and write runs.csv
    Run(Common),
    /// Compare trajectories on original and feature-scaled data
    Invariance(Common),
    /// Grid over lr_grid; writes sweep.csv and best.csv
    Sweep(Common),
    /// Run the built-in oracle suites
    Selfcheck {
        /// lmo, polar, linalg, grad or invariance
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: Common, command: Command) -> CliResult<ExperimentConfig> {
    let file = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    ExperimentConfig::resolve(file.overlay(common.settings), command)
}

fn execute(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Run(c) => {
            let cfg = resolve(c, Command::Run)?;
            let results = commands::cmd_run(&cfg)?;
            for r in &results {
                let status = match r.trajectory.diverged_at {
                    Some(at) => format!("diverged at step {at}"),
                    None => format!("final loss {:e}", r.final_loss()),
                };
                println!("{}: {status}", r.run_id);
            }
            println!("wrote {}", cfg.out.join("runs.csv").display());
        }
        Cmd::Invariance(c) => {
            let cfg = resolve(c, Command::Invariance)?;
            for s in commands::cmd_invariance(&cfg)? {
                println!("{}", s.line());
            }
            println!("wrote {}", cfg.out.join("invariance.csv").display());
        }
        Cmd::Sweep(c) => {
            let cfg = resolve(c, Command::Sweep)?;
            for b in commands::cmd_sweep(&cfg)? {
                println!("{}: best lr {:e}", b.optimizer, b.lr);
            }
            println!("wrote {}", cfg.out.join("best.csv").display());
        }
        Cmd::Selfcheck { suite, common } => {
            let cfg = resolve(common, Command::SelfCheck)?;
            let outcomes = commands::cmd_selfcheck(&cfg, suite.as_deref())?;
            for o in &outcomes {
                let mark = if o.passed { "pass" } else { "FAIL" };
                println!("{mark} {:<10} {:>6} ms  {}", o.name, o.elapsed_ms, o.detail);
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if !failed.is_empty() {
                return Err(CliError::SelfCheck(failed.join(", ")));
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
