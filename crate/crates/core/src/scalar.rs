//! Floating-point scalar abstraction for the pulse/delay math.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Scalar type the pulse-shape and quadrature code is generic over.
/// Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + 'static
{
    /// Lossy conversion from `f64`, used for tabulated constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable")
    }

    /// Lossy conversion to `f64` for interop with the matrix layer.
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
