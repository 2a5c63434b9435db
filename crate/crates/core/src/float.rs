//! Scalar abstraction: every numerical routine in this crate is generic over
//! [`Real`], which is satisfied by `f32` and `f64`.
//!
//! `f64` is the type the concrete aliases at the crate root use and the one
//! the command-line tools run with; `f32` stays available for quick
//! precision-sensitivity experiments.

use num_complex::Complex;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + core::fmt::Debug
    + core::fmt::Display
    + core::fmt::LowerExp
    + core::iter::Sum
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into `Self`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Lossy view as `f64` (exact for `f64` itself).
    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }

    /// Convert a grid index into `Self`.
    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("index representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the crate scalar.
pub type Cplx<T> = Complex<T>;

/// `i` as a [`Cplx`].
#[inline]
pub fn imag_unit<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::one())
}
