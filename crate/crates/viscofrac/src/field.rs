//! Scalar abstraction shared by the tensor algebra and the constitutive
//! evaluations.
//!
//! Every pointwise quantity (strains, stresses, the viscous modulus tensor)
//! is generic over [`Field`], implemented for `f64` and [`Complex64`]. The
//! complex implementation backs complex-step differentiation: evaluating a
//! real-analytic expression at `x + i*delta` and reading `Im/delta` gives a
//! derivative with no subtractive cancellation, so `delta` can be taken far
//! below sqrt(machine epsilon).

pub use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar field: the operations the simulator needs from its number type.
pub trait Field:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Whether the type carries an imaginary slot. When it does, a nested
    /// complex step is unavailable and derivative helpers fall back to
    /// central differences on the same type.
    const HAS_IMAG: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_re(x: f64) -> Self;
    /// Real part (identity for `f64`).
    fn re(self) -> f64;
    /// Imaginary part (zero for `f64`).
    fn im(self) -> f64;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Field for f64 {
    const HAS_IMAG: bool = false;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn im(self) -> f64 {
        0.0
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

impl Field for Complex64 {
    const HAS_IMAG: bool = true;

    #[inline]
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    #[inline]
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn im(self) -> f64 {
        self.im
    }
    #[inline]
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
}
