//! `fbp run <config> [--out DIR] [--seed N] [--threads N]`
//!
//! Exit codes: 0 when every check passes, 1 on solver failure, failed
//! checks or unwritable output, 2 on configuration errors.

mod config;
mod error;
mod output;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "fbp", version, about = "Run free boundary scenarios from a TOML file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write report.json plus CSV tables.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for random data (overrides seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        out,
        seed,
        threads,
    } = Cli::parse().command;
    match run(&config, out, seed, threads) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fbp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(path: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> Result<u8, CliError> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    let dir = out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fbp-out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;

    let mut report = json!({
        "kind": cfg.kind.name(),
        "seed": cfg.seed,
        "eps": cfg.eps(),
    });
    match scenarios::run(&cfg) {
        Ok(outcome) => {
            let passed = outcome.checks.iter().all(|c| c.pass);
            for c in &outcome.checks {
                println!(
                    "check {}: {} (value {:e}, limit {:e})",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.value,
                    c.limit
                );
            }
            report["status"] = Value::from(if passed { "ok" } else { "checks-failed" });
            report["checks"] = serde_json::to_value(&outcome.checks).map_err(|e| CliError::Output(e.to_string()))?;
            report["results"] = Value::Object(outcome.results);
            report["tables"] = outcome.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
            for t in &outcome.tables {
                t.write(&dir)?;
            }
            output::write_report(&dir, &report)?;
            Ok(if passed { 0 } else { 1 })
        }
        Err(e @ CliError::Config(_)) => Err(e),
        Err(e) => {
            report["status"] = Value::from("failed");
            report["error"] = json!({ "kind": e.tag(), "message": e.to_string() });
            output::write_report(&dir, &report)?;
            Err(e)
        }
    }
}
