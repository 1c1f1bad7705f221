//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable throughout the library (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Relative step for central differences of brackets and jacobians.
    fn fd_step() -> Self;
    /// Relative step for gradients of user scalar functions.
    fn grad_step() -> Self;

    /// Lifts an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    /// Lossy conversion used for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn fd_step() -> Self {
        1e-5
    }
    fn grad_step() -> Self {
        1e-6
    }
}

impl Real for f32 {
    fn fd_step() -> Self {
        5e-3
    }
    fn grad_step() -> Self {
        5e-3
    }
}

/// Scaled central-difference step for a coordinate value.
#[inline]
pub(crate) fn scaled_step<T: Real>(base: T, x: T) -> T {
    base * x.abs().max(T::one())
}
