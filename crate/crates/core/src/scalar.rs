//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Floating-point scalar the numeric routines are generic over.
///
/// Implemented by `f32` and `f64`. Serde bounds are included so fitted
/// models and configurations serialize without extra where-clauses.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (exact for `f64` itself).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }

    /// Lossy conversion to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn fl<F: Scalar>(v: f64) -> F {
    F::from_f64_lossy(v)
}
