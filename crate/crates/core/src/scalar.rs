// SPDX-License-Identifier: Apache-2.0
//! Scalar abstraction shared by the closed-form parts of the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Floating-point scalar accepted by the generic closed forms.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
