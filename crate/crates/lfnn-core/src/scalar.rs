//! Scalar abstraction so the same code runs at 32-bit or 64-bit precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type for tensors, losses, and optimizer state.
///
/// Training runs default to `f32`; gradient-check tests use `f64` so central
/// finite differences are reliable.
pub trait Scalar: Float + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Short name used when echoing configuration ("f32" / "f64").
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
