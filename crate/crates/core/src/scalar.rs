//! Numeric traits the geometry and math modules are generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Anything box arithmetic can run on: floats and exact rationals alike.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + Debug {}

/// Floating point scalar, implemented for [f32] and [f64].
pub trait Real:
    Scalar + Float + FromPrimitive + ToPrimitive + Sum + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for f64, rounded for f32.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
}
