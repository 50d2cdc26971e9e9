//! Scalar abstractions shared by the numerical kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive};

/// Floating point scalar the conformal kernels are generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for unrepresentable values, which
    /// never happens for the finite constants used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Coefficient field for exact polynomial algebra (rationals) or floating point.
pub trait Field: Clone + Debug + PartialEq + PartialOrd + Num + Signed {
    /// Whether `self` is zero up to rounding on values of size `scale`. Exact
    /// fields demand an exact zero.
    fn negligible(&self, _scale: &Self) -> bool {
        self.is_zero()
    }
}

impl Field for num_rational::BigRational {}
impl Field for num_rational::Rational64 {}

impl Field for f64 {
    fn negligible(&self, scale: &Self) -> bool {
        self.abs() <= 1e-10 * scale.abs().max(1.0)
    }
}

impl Field for f32 {
    fn negligible(&self, scale: &Self) -> bool {
        self.abs() <= 1e-4 * scale.abs().max(1.0)
    }
}
