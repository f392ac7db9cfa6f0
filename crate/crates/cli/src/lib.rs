// SPDX-License-Identifier: Apache-2.0
//! Configuration parsing and experiment pipelines behind the `echo-cqed`
//! command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{parse_config, parse_config_in, Experiment, ExperimentConfig};
pub use error::{CliError, ConfigError, ConfigErrors};
pub use pipeline::{run, Check, CheckStatus, RunSummary, VERSION};

/// Reads and parses a configuration file, resolving relative paths inside it
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut cfg = parse_config_in(&text, base)?;
    if let (Some(dir), Some(base)) = (&cfg.output_dir, base) {
        if dir.is_relative() {
            cfg.output_dir = Some(base.join(dir));
        }
    }
    Ok(cfg)
}

/// Options taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub check: bool,
}

/// Loads the configuration, applies command-line overrides and runs it.
pub fn run_file(config: &Path, options: &RunOptions) -> Result<RunSummary, CliError> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = options.seed {
        cfg.seed = seed;
    }
    let out = options.out.clone().or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
        ConfigErrors(vec![ConfigError::new(0, "no output directory: pass --out or set `output_dir`")])
    })?;
    run(&cfg, &out, options.check)
}
