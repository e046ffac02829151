//! Scalar abstraction letting the iterative solver run on real (f64) and
//! complex-symmetric (Complex64) systems through one code path. The conjugate
//! direction recurrences use the unconjugated bilinear form, which makes the
//! real instance ordinary CG and the complex instance COCG.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn from_complex(v: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
    /// Squared modulus.
    fn abs_sq(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;

    fn from_f64(v: f64) -> f64 {
        v
    }

    fn from_complex(v: Complex64) -> f64 {
        debug_assert!(
            v.im.abs() <= 1e-12 * v.re.abs().max(1.0),
            "lossy material in a real solve"
        );
        v.re
    }

    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn abs_sq(self) -> f64 {
        self * self
    }

    fn scale(self, s: f64) -> f64 {
        self * s
    }

    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);
    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    fn from_f64(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn from_complex(v: Complex64) -> Complex64 {
        v
    }

    fn to_complex(self) -> Complex64 {
        self
    }

    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }

    fn scale(self, s: f64) -> Complex64 {
        self * s
    }

    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}
