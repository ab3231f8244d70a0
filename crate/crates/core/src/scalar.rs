//! Real scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point type backing all complex arithmetic (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Factor applied to the f64-calibrated tolerances of [`crate::NumericPolicy`].
    const TOLERANCE_SCALE: f64;

    /// Converts an f64 literal; exact for f64, rounded for f32.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const TOLERANCE_SCALE: f64 = 1.0;
}

impl Scalar for f32 {
    const TOLERANCE_SCALE: f64 = 1e6;
}
