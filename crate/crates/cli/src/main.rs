// SPDX-License-Identifier: Apache-2.0
//! `echo-cqed`: runs one experiment described by a configuration file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use echo_cqed_cli::{run_file, CheckStatus, RunOptions};

/// Transient echo spectroscopy of a qubit ensemble in a lossy cavity.
#[derive(Debug, Parser)]
#[command(name = "echo-cqed", version)]
struct Args {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 3 when any consistency check fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let options = RunOptions { out: args.out, seed: args.seed, check: args.check };
    match run_file(&args.config, &options) {
        Ok(summary) => {
            println!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
            for c in &summary.checks {
                let tag = match c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::Info => "info",
                };
                println!("  {tag:<4} {:<30} {:.6e}", c.name, c.value);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("echo-cqed: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
