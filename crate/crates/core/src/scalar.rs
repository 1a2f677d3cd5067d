use std::fmt::{Debug, Display};
use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the numeric core is written against: `f32` or `f64`.
pub trait Scalar:
    NdFloat + FloatConst + FromPrimitive + ToPrimitive + FromStr + Default + Debug + Display
{
    /// Lossless for `f64`, rounding for `f32`.
    fn of(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// `p * ln(p)` with the `0 * ln 0 = 0` convention.
pub fn xlogx<F: Scalar>(p: F) -> F {
    if p <= F::zero() {
        F::zero()
    } else {
        p * p.ln()
    }
}
