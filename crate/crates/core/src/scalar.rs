//! Scalar abstractions.
//!
//! [`Scalar`] only needs field arithmetic and ordering, so closed-form
//! expressions written against it evaluate on `f64`, `f32` and exact
//! rationals alike. [`Real`] adds transcendental functions and is what the
//! vector, model and estimator code works with.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, Signed};

/// Ordered field element.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics if the value is not representable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }

    fn from_signed(n: i64) -> Self {
        Self::from_i64(n).expect("integer not representable in scalar type")
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where
    T: Num + Signed + Copy + PartialOrd + FromPrimitive + Debug + Send + Sync + 'static
{
}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Scalar + Float + Sum + Display {
    /// Tolerance used when checking that a vector lies on the simplex.
    fn simplex_tolerance(len: usize) -> Self {
        let eps = <Self as Float>::epsilon() * Self::from_count(16 * len.max(1));
        eps.max_of(Self::lit(1e-12))
    }
}

impl Real for f32 {}
impl Real for f64 {}
