// SPDX-License-Identifier: Apache-2.0
//! Errors of the command-line driver and their exit codes.

use std::fmt;

use thiserror::Error;

/// One problem found in a configuration file. Line 0 refers to the file as
/// a whole, for example a missing key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// All problems found in one configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Failure of a run, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n{0}")]
    Config(ConfigErrors),
    #[error("numerical failure: {0}")]
    Numerical(#[from] echo_cqed::Error),
    #[error("i/o failure on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{failed} acceptance check(s) failed: {names}")]
    Check { failed: usize, names: String },
}

impl From<ConfigErrors> for CliError {
    fn from(e: ConfigErrors) -> Self {
        CliError::Config(e)
    }
}

impl CliError {
    /// `1` configuration, `2` numerical or i/o, `3` failed checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io { .. } => 2,
            CliError::Check { .. } => 3,
        }
    }
}
