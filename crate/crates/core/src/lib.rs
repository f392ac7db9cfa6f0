// SPDX-License-Identifier: Apache-2.0
//! Transient echo spectroscopy of an inhomogeneously broadened qubit coupled
//! to a lossy cavity: filter functions, cavity backaction, emitted fields,
//! a nuclear-spin environment model and a state-vector oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backaction;
pub mod cavity;
pub mod error;
pub mod filters;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod quad;
pub mod scalar;
pub mod signal;
pub mod spinmodel;

pub use error::{Error, Result};
pub use scalar::Real;

/// System parameters in double precision.
pub type SystemParams = model::SystemParams<f64>;
/// Pulse sequence in double precision.
pub type PulseSequence = model::PulseSequence<f64>;
/// Pulse sequence with exact rational timing.
pub type RationalSequence = model::PulseSequence<num_rational::Rational64>;

/// Version of the library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
