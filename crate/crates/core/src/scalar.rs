//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Real scalar the model, filter, estimator and planner are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that are stated for double
/// precision are widened for narrower types through [`Real::tol`].
pub trait Real:
    Copy
    + na::RealField
    + nt::FromPrimitive
    + nt::ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self {
        na::convert(x)
    }

    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// A tolerance of `base`, never tighter than a few hundred ulps of this type.
    fn tol(base: f64) -> Self {
        let floor = 256.0 * Self::default_epsilon().as_f64();
        Self::lit(base.max(floor))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum of a slice.
pub(crate) fn sum<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x)
}

pub(crate) fn l1_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs())
}

pub(crate) fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}
