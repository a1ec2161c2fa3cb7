//! Scalar abstraction for the numeric core.
//!
//! Every numeric module in this crate is generic over [`Real`], which bundles
//! the `num-traits` capabilities the solvers rely on. `f32` and `f64` are the
//! intended implementors; `f64` aliases for the common concrete types live at
//! the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by kernels, posteriors, and policies.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64` for literals and configuration values.
    /// Lossy for `f32`.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value not representable in this scalar type")
    }

    /// Lossy conversion to `f64`, for output formatting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for [`Real::from_f64_lossy`], used for numeric literals in
/// generic code.
#[inline]
pub(crate) fn real<F: Real>(x: f64) -> F {
    F::from_f64_lossy(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(real::<f64>(0.25), 0.25);
        assert_eq!(real::<f32>(0.25), 0.25f32);
        assert_eq!(0.25f64.to_f64_lossy(), 0.25);
    }

    #[test]
    fn pi_available_in_generic_code() {
        fn pi<F: Real>() -> F {
            F::PI()
        }
        assert!((pi::<f64>() - std::f64::consts::PI).abs() < 1e-15);
    }
}
