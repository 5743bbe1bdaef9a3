//! Scalar abstraction shared by the numerical core.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solvers are generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Default residual tolerance for one-dimensional solves.
    fn default_tol() -> Self;
}

impl Real for f64 {
    fn default_tol() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn default_tol() -> Self {
        1e-4
    }
}

#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable")
}
