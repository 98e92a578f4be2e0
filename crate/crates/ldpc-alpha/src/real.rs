//! Scalar abstraction over `f64` and arbitrary-precision floats.
//!
//! The recursions that assemble the 1/n coefficient suffer catastrophic
//! cancellation between their tree and cycle parts, so they are written
//! generically over [`Real`] and run either in plain `f64` or in
//! [`MpReal`] at a configurable number of mantissa bits.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

type Mp = FBig<HalfEven, 2>;

/// Arithmetic interface needed by the density-evolution and coefficient
/// recursions.
///
/// `of` builds a constant carrying the same working precision as `self`;
/// every constant entering a computation is created through it so that a
/// single seed value fixes the precision of the whole recursion.
pub trait Real:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant with the same working precision as `self`.
    fn of(&self, value: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Integer power, with the convention `x^0 = 1` for every `x`.
    fn powi(&self, exp: u32) -> Self;

    fn abs(&self) -> Self;

    fn is_zero(&self) -> bool;
}

impl Real for f64 {
    fn of(&self, value: f64) -> Self {
        value
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn powi(&self, exp: u32) -> Self {
        f64::powi(*self, exp as i32)
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// Arbitrary-precision float with a fixed number of mantissa bits.
///
/// Thin wrapper around [`dashu_float::FBig`] that rounds every operation
/// result back to the working precision, so intermediate values never grow
/// beyond the requested size.
#[derive(Clone, Debug)]
pub struct MpReal {
    value: Mp,
    bits: usize,
}

impl MpReal {
    /// Exact conversion from `f64`, then rounded to `bits` of mantissa.
    pub fn with_bits(value: f64, bits: usize) -> Self {
        assert!(bits >= 2, "precision must be at least 2 bits");
        let v = Mp::try_from(value)
            .expect("finite f64")
            .with_precision(bits)
            .value();
        MpReal { value: v, bits }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    fn wrap(&self, value: Mp) -> Self {
        MpReal {
            value: value.with_precision(self.bits).value(),
            bits: self.bits,
        }
    }
}

impl PartialEq for MpReal {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for MpReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl Add for MpReal {
    type Output = MpReal;
    fn add(self, rhs: MpReal) -> MpReal {
        self.wrap(&self.value + &rhs.value)
    }
}

impl Sub for MpReal {
    type Output = MpReal;
    fn sub(self, rhs: MpReal) -> MpReal {
        self.wrap(&self.value - &rhs.value)
    }
}

impl Mul for MpReal {
    type Output = MpReal;
    fn mul(self, rhs: MpReal) -> MpReal {
        self.wrap(&self.value * &rhs.value)
    }
}

impl Div for MpReal {
    type Output = MpReal;
    fn div(self, rhs: MpReal) -> MpReal {
        self.wrap(&self.value / &rhs.value)
    }
}

impl Neg for MpReal {
    type Output = MpReal;
    fn neg(self) -> MpReal {
        let bits = self.bits;
        MpReal {
            value: -self.value,
            bits,
        }
    }
}

impl Real for MpReal {
    fn of(&self, value: f64) -> Self {
        MpReal::with_bits(value, self.bits)
    }

    fn to_f64(&self) -> f64 {
        self.value.to_f64().value()
    }

    fn powi(&self, exp: u32) -> Self {
        // binary exponentiation, rounding after each multiply
        let mut result = self.of(1.0);
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }

    fn abs(&self) -> Self {
        if self.value < Mp::ZERO {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn is_zero(&self) -> bool {
        self.value == Mp::ZERO
    }
}

impl fmt::Display for MpReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_round_trip() {
        let x = MpReal::with_bits(0.1, 256);
        assert_eq!(x.to_f64(), 0.1);
        assert_eq!(x.of(2.5).to_f64(), 2.5);
    }

    #[test]
    fn powi_conventions() {
        let x = MpReal::with_bits(0.0, 64);
        assert_eq!(x.powi(0).to_f64(), 1.0);
        let y = MpReal::with_bits(3.0, 64);
        assert_eq!(y.powi(5).to_f64(), 243.0);
        assert_eq!(2.0f64.powi(10), 1024.0);
    }

    #[test]
    fn precision_actually_matters() {
        // 1 + 2^-100 - 1 vanishes in f64 but survives at 256 bits
        let one = MpReal::with_bits(1.0, 256);
        let tiny = one.of(2f64.powi(-100));
        let diff = (one.clone() + tiny.clone()) - one;
        assert!(!diff.is_zero());
        assert!((diff.to_f64() - 2f64.powi(-100)).abs() < 1e-45);

        let f64_diff = (1.0 + 2f64.powi(-100)) - 1.0;
        assert_eq!(f64_diff, 0.0);
    }

    #[test]
    fn abs_and_ordering() {
        let a = MpReal::with_bits(-1.5, 64);
        assert_eq!(a.abs().to_f64(), 1.5);
        assert!(a < a.of(0.0));
    }
}
