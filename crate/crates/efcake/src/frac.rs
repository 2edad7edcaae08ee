//! Exact rational amounts.
//!
//! Every value, measure, tolerance and probability in this crate is a
//! [`Frac`]: an arbitrary-precision rational kept in lowest terms with a
//! positive denominator. There is no floating point anywhere on the
//! measurement path; envy-freeness claims are exact (in)equalities.
//!
//! ```
//! use efcake::frac::Frac;
//!
//! let a: Frac = "1/3".parse().unwrap();
//! let b: Frac = "1/6".parse().unwrap();
//! assert_eq!((a + b).to_string(), "1/2");
//! ```

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;
use thiserror::Error;

/// An exact rational number, stored reduced with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Frac(BigRational);

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum FracParseError {
    #[error("empty fraction literal")]
    Empty,
    #[error("invalid integer `{0}`")]
    BadInt(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
}

impl Frac {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Frac(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn int(n: i64) -> Self {
        Frac(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Frac(BigRational::zero())
    }

    pub fn one() -> Self {
        Frac(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Frac {
        Frac(self.0.abs())
    }

    pub fn min(self, other: Frac) -> Frac {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Frac) -> Frac {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// `2^e` for any integer exponent.
    pub fn pow2(e: i64) -> Frac {
        let one = BigInt::one();
        if e >= 0 {
            Frac(BigRational::from_integer(one << e as usize))
        } else {
            Frac(BigRational::new(one.clone(), one << (-e) as usize))
        }
    }

    /// Exponent of the leading binary digit: `2^e <= self < 2^(e+1)`.
    /// Cheap even for values with huge numerators and denominators.
    pub fn floor_log2(&self) -> i64 {
        assert!(self.is_positive(), "floor_log2 of a non-positive value");
        let n = self.0.numer();
        let d = self.0.denom();
        let e = n.bits() as i64 - d.bits() as i64;
        // `self * 2^-e` lies in [1/2, 2); nudge down when below 1.
        let at_least_one = if e >= 0 {
            *n >= (d.clone() << e as usize)
        } else {
            (n.clone() << (-e) as usize) >= *d
        };
        if at_least_one {
            e
        } else {
            e - 1
        }
    }

    /// Largest power of two not exceeding this (positive) value. Used to
    /// snap derived tolerances to small representations so repeated
    /// halving loops never drag huge rationals through every comparison.
    pub fn pow2_floor(&self) -> Frac {
        Frac::pow2(self.floor_log2())
    }

    /// Largest integer not exceeding this value.
    pub fn floor(&self) -> Frac {
        Frac(self.0.floor())
    }

    pub fn recip(&self) -> Frac {
        assert!(!self.is_zero(), "reciprocal of zero");
        Frac(self.0.recip())
    }

    /// Lossy conversion for reporting only; never used in a comparison
    /// that decides a protocol outcome.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub(crate) fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub(crate) fn denom(&self) -> &BigInt {
        self.0.denom()
    }
}

impl From<u64> for Frac {
    fn from(n: u64) -> Self {
        Frac(BigRational::from_integer(BigInt::from(n)))
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Frac {
            type Output = Frac;
            fn $method(self, rhs: Frac) -> Frac {
                Frac((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Frac> for &'a Frac {
            type Output = Frac;
            fn $method(self, rhs: &'a Frac) -> Frac {
                Frac((&self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<&'a Frac> for Frac {
            type Output = Frac;
            fn $method(self, rhs: &'a Frac) -> Frac {
                Frac((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Frac> for &'a Frac {
            type Output = Frac;
            fn $method(self, rhs: Frac) -> Frac {
                Frac((&self.0).$method(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Div for Frac {
    type Output = Frac;
    fn div(self, rhs: Frac) -> Frac {
        assert!(!rhs.is_zero(), "division by zero");
        Frac(self.0 / rhs.0)
    }
}

impl<'a> Div<&'a Frac> for &'a Frac {
    type Output = Frac;
    fn div(self, rhs: &'a Frac) -> Frac {
        assert!(!rhs.is_zero(), "division by zero");
        Frac(&self.0 / &rhs.0)
    }
}

impl Neg for Frac {
    type Output = Frac;
    fn neg(self) -> Frac {
        Frac(-self.0)
    }
}

impl AddAssign for Frac {
    fn add_assign(&mut self, rhs: Frac) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Frac {
    fn sub_assign(&mut self, rhs: Frac) {
        self.0 -= rhs.0;
    }
}

impl Sum for Frac {
    fn sum<I: Iterator<Item = Frac>>(iter: I) -> Frac {
        iter.fold(Frac::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Frac {
    /// Serializes as `num/den`, integers as the bare numerator (`3`, `-2`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Frac {
    type Err = FracParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(FracParseError::Empty);
        }
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (s, None),
        };
        let n: BigInt = num
            .parse()
            .map_err(|_| FracParseError::BadInt(num.to_string()))?;
        let d: BigInt = match den {
            Some(d) => d
                .parse()
                .map_err(|_| FracParseError::BadInt(d.to_string()))?,
            None => BigInt::one(),
        };
        if d.is_zero() {
            return Err(FracParseError::ZeroDenominator(s.to_string()));
        }
        Ok(Frac(BigRational::new(n, d)))
    }
}
