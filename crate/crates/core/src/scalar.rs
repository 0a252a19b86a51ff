//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point scalar the math kernels are generic over.
///
/// `num_traits::Float` already implies `NumCast`, so `S::from(x)` is
/// available for lossy conversions from primitives.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64`, for constants inside generic code.
    fn of(x: f64) -> Self {
        Self::from(x).expect("finite f64 converts to any Scalar")
    }

    /// Lossy conversion from `usize` (counts, histogram sizes).
    fn of_usize(n: usize) -> Self {
        Self::from(n).expect("usize converts to any Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
