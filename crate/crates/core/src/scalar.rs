//! Scalar abstraction for the geometry and factor math.
//!
//! Everything in [`crate::lie`] and [`crate::factors`] is written against
//! [`Scalar`] so it can run in `f32` or `f64`. The pipeline stages above it
//! (pose graph, consistency search, overlap search) are instantiated with
//! `f64` through the aliases at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type usable by the geometry code: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Rotation angle below which exp/log use their series expansions.
    const SMALL_ANGLE: f64;

    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const SMALL_ANGLE: f64 = 1e-7;
}

impl Scalar for f32 {
    // sqrt(f32::EPSILON); second-order series is exact to rounding below it
    const SMALL_ANGLE: f64 = 3.5e-4;
}
