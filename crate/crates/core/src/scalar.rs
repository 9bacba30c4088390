//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the networks, centers and classifiers compute in.
///
/// Blanket-implemented for `f32` and `f64`. Caches always store `f32` on
/// disk; values are widened or kept as-is when loaded into a `Real`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Real")
    }

    fn from_f32_lossless(v: f32) -> Self {
        Self::from_f32(v).expect("f32 is representable in every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("Real converts to f32")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + LinalgScalar
        + ScalarOperand
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Widens an `f32` slice into a freshly allocated vector of `T`.
pub fn widen<T: Real>(values: &[f32]) -> Vec<T> {
    values.iter().map(|&v| T::from_f32_lossless(v)).collect()
}
