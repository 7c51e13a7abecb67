//! Extended-range floating point.
//!
//! `ExtFloat` keeps an `f64` mantissa in `[1, 2)` (with sign) and a separate
//! `i64` binary exponent, so products and sums of masses such as `4^1000` or
//! `170!` never overflow. Precision is that of the mantissa.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtFloat {
    mant: f64,
    exp: i64,
}

/// Outcome of converting back to `f64` when the value is out of range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeError {
    Overflow,
    Underflow,
}

fn frexp(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // subnormal: rescale into the normal range first
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let e = raw_exp - 1023;
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1023 << 52));
    (m, e)
}

fn ldexp(m: f64, e: i64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    if e > 1100 {
        return m.signum() * f64::INFINITY;
    }
    if e < -1200 {
        return 0.0 * m.signum();
    }
    let mut x = m;
    let mut e = e as i32;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

impl ExtFloat {
    pub const ZERO: ExtFloat = ExtFloat { mant: 0.0, exp: 0 };
    pub const ONE: ExtFloat = ExtFloat { mant: 1.0, exp: 0 };

    /// Panics on NaN or infinite input.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "ExtFloat::from_f64 requires a finite value");
        let (mant, exp) = frexp(x);
        ExtFloat { mant, exp }
    }

    /// `2^e`.
    pub fn pow2(e: i64) -> Self {
        ExtFloat { mant: 1.0, exp: e }
    }

    fn normalized(mant: f64, exp: i64) -> Self {
        if mant == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(mant);
        ExtFloat { mant: m, exp: exp + e }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn is_sign_negative(&self) -> bool {
        self.mant < 0.0
    }

    pub fn abs(self) -> Self {
        ExtFloat { mant: self.mant.abs(), exp: self.exp }
    }

    /// Mantissa in `[1, 2)` up to sign, and binary exponent.
    pub fn parts(&self) -> (f64, i64) {
        (self.mant, self.exp)
    }

    pub fn to_f64(self) -> Result<f64, RangeError> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let x = ldexp(self.mant, self.exp);
        if x.is_infinite() {
            Err(RangeError::Overflow)
        } else if x == 0.0 {
            Err(RangeError::Underflow)
        } else {
            Ok(x)
        }
    }

    /// Converts, saturating to `±inf` or `±0`.
    pub fn to_f64_lossy(self) -> f64 {
        ldexp(self.mant, self.exp)
    }

    /// Base-2 logarithm of a positive value.
    pub fn log2(self) -> f64 {
        debug_assert!(self.mant > 0.0);
        self.exp as f64 + self.mant.log2()
    }

    pub fn ln(self) -> f64 {
        self.log2() * std::f64::consts::LN_2
    }

    pub fn powi(self, n: u32) -> Self {
        let mut acc = Self::ONE;
        let mut base = self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    /// `self / other` as an ordinary float; exact scaling of exponents avoids
    /// overflow when both operands are huge.
    pub fn ratio(self, other: ExtFloat) -> f64 {
        (self / other).to_f64_lossy()
    }
}

impl Add for ExtFloat {
    type Output = ExtFloat;
    fn add(self, rhs: ExtFloat) -> ExtFloat {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let shift = big.exp - small.exp;
        if shift > 80 {
            return big;
        }
        let m = big.mant + small.mant * 2f64.powi(-(shift as i32));
        ExtFloat::normalized(m, big.exp)
    }
}

impl Neg for ExtFloat {
    type Output = ExtFloat;
    fn neg(self) -> ExtFloat {
        ExtFloat { mant: -self.mant, exp: self.exp }
    }
}

impl Sub for ExtFloat {
    type Output = ExtFloat;
    fn sub(self, rhs: ExtFloat) -> ExtFloat {
        self + (-rhs)
    }
}

impl Mul for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, rhs: ExtFloat) -> ExtFloat {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        ExtFloat::normalized(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl Div for ExtFloat {
    type Output = ExtFloat;
    fn div(self, rhs: ExtFloat) -> ExtFloat {
        assert!(!rhs.is_zero(), "ExtFloat division by zero");
        if self.is_zero() {
            return Self::ZERO;
        }
        ExtFloat::normalized(self.mant / rhs.mant, self.exp - rhs.exp)
    }
}

impl Mul<f64> for ExtFloat {
    type Output = ExtFloat;
    fn mul(self, rhs: f64) -> ExtFloat {
        self * ExtFloat::from_f64(rhs)
    }
}

impl PartialOrd for ExtFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let d = *self - *other;
        if d.is_zero() {
            Some(Ordering::Equal)
        } else if d.mant > 0.0 {
            Some(Ordering::Greater)
        } else {
            Some(Ordering::Less)
        }
    }
}

impl From<f64> for ExtFloat {
    fn from(x: f64) -> Self {
        ExtFloat::from_f64(x)
    }
}

impl fmt::Debug for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for ExtFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_f64() {
            Ok(x) => write!(f, "{x}"),
            Err(_) => {
                let l10 = self.abs().log2() * std::f64::consts::LOG10_2;
                let e10 = l10.floor();
                let m10 = 10f64.powf(l10 - e10) * self.mant.signum();
                write!(f, "{m10}e{e10}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_ordinary_values() {
        for &x in &[1.0, -3.5, 1e-300, 2.5e300, 0.1, 7.0, f64::MIN_POSITIVE / 8.0] {
            assert_eq!(ExtFloat::from_f64(x).to_f64().unwrap(), x);
        }
        assert_eq!(ExtFloat::from_f64(0.0).to_f64().unwrap(), 0.0);
    }

    #[test]
    fn powers_of_four_beyond_f64() {
        let four = ExtFloat::from_f64(4.0);
        let big = four.powi(1000);
        assert_eq!(big.parts(), (1.0, 2000));
        assert_eq!(big.to_f64(), Err(RangeError::Overflow));
        assert!((big.log2() - 2000.0).abs() < 1e-12);
        let ratio = big.ratio(four.powi(999));
        assert_eq!(ratio, 4.0);
    }

    #[test]
    fn arithmetic_matches_f64_in_range() {
        let a = ExtFloat::from_f64(3.25);
        let b = ExtFloat::from_f64(-1.125);
        assert_eq!((a + b).to_f64().unwrap(), 3.25 - 1.125);
        assert_eq!((a - b).to_f64().unwrap(), 3.25 + 1.125);
        assert_eq!((a * b).to_f64().unwrap(), 3.25 * -1.125);
        assert_eq!((a / b).to_f64().unwrap(), 3.25 / -1.125);
        assert!(a > b);
        assert!(b < ExtFloat::ZERO);
    }

    #[test]
    fn tiny_addend_is_absorbed() {
        let big = ExtFloat::pow2(500);
        let tiny = ExtFloat::pow2(-500);
        assert_eq!(big + tiny, big);
    }
}
