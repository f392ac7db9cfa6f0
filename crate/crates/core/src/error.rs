// SPDX-License-Identifier: Apache-2.0
//! Error type shared by all modules.

use thiserror::Error;

/// Failures raised by parameter validation and numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("cavity loss rates do not add up: kappa = {kappa}, kappa_in + kappa_out + kappa_ext = {sum}")]
    KappaPartition { kappa: f64, sum: f64 },
    #[error("pulse times must be non-negative and strictly increasing")]
    UnorderedPulses,
    #[error("time {t} is not an echo time of the sequence (integral of the sign function is {integral})")]
    NonEcho { t: f64, integral: f64 },
    #[error("undersampled input: {0}")]
    Undersampled(String),
    #[error("numerical routine did not converge: {0}")]
    NotConverged(String),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
