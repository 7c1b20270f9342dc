//! Exact rational arithmetic. `Rat` is the single number type of the
//! whole crate: every measure, weight, interval endpoint and stream
//! value is one of these. Backed by `num_rational::BigRational`, which
//! keeps values in lowest terms with a positive denominator.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize, Serializer};

/// Arbitrary-precision rational, always in lowest terms with positive
/// denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(try_from = "String")]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num/den`, reduced. Panics on a zero denominator; use
    /// [`Rat::from_str`] for fallible parsing of untrusted input.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_big(num: BigInt, den: BigInt) -> Self {
        assert!(!den.is_zero(), "zero denominator");
        Rat(BigRational::new(num, den))
    }

    /// 2^exp for any integer exponent, exactly.
    pub fn pow2(exp: i64) -> Self {
        let mag = BigInt::from(2u32).pow(exp.unsigned_abs() as u32);
        if exp >= 0 {
            Rat(BigRational::from_integer(mag))
        } else {
            Rat(BigRational::new(BigInt::one(), mag))
        }
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }

    /// Sign as -1, 0 or +1.
    pub fn signum(&self) -> i32 {
        match self.0.cmp(&BigRational::zero()) {
            Ordering::Less => -1,
            Ordering::Equal => 0,
            Ordering::Greater => 1,
        }
    }

    /// True iff the denominator is a power of two (1 counts).
    pub fn is_dyadic(&self) -> bool {
        let den: BigUint = self.0.denom().magnitude().clone();
        // power of two <=> exactly one set bit
        den.count_ones() == 1
    }

    /// For a positive dyadic `m/2^k` in lowest terms, returns `(m, k)`.
    pub fn dyadic_parts(&self) -> Option<(BigUint, u64)> {
        if !self.is_positive() || !self.is_dyadic() {
            return None;
        }
        let den = self.0.denom().magnitude();
        let k = den.trailing_zeros().unwrap_or(0);
        Some((self.0.numer().magnitude().clone(), k))
    }

    /// Lossy conversion for presentation (plotting) only.
    pub fn to_f64_lossy(&self) -> f64 {
        let num = self.0.numer();
        let den = self.0.denom();
        // good enough for plots; exact values live in the CSVs
        let nf = num.to_string().parse::<f64>().unwrap_or(f64::NAN);
        let df = den.to_string().parse::<f64>().unwrap_or(f64::NAN);
        nf / df
    }
}

/// Rendered as `num/den` (integers still carry the `/1`), so every
/// artifact round-trips exactly through [`Rat::from_str`].
impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatParseError {
    /// Decimal notation is rejected on purpose: only `num/den` (or a
    /// plain integer) crosses any interface.
    DecimalRejected(String),
    Malformed(String),
    ZeroDenominator(String),
}

impl fmt::Display for RatParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatParseError::DecimalRejected(s) => {
                write!(f, "decimal notation rejected, use num/den: {s:?}")
            }
            RatParseError::Malformed(s) => write!(f, "malformed rational: {s:?}"),
            RatParseError::ZeroDenominator(s) => write!(f, "zero denominator: {s:?}"),
        }
    }
}

impl std::error::Error for RatParseError {}

impl FromStr for Rat {
    type Err = RatParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains('.') || s.contains(['e', 'E']) {
            return Err(RatParseError::DecimalRejected(s.to_string()));
        }
        let (num_s, den_s) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let num = BigInt::from_str(num_s.trim())
            .map_err(|_| RatParseError::Malformed(s.to_string()))?;
        let den = BigInt::from_str(den_s.trim())
            .map_err(|_| RatParseError::Malformed(s.to_string()))?;
        if den.is_zero() {
            return Err(RatParseError::ZeroDenominator(s.to_string()));
        }
        Ok(Rat(BigRational::new(num, den)))
    }
}

impl TryFrom<String> for Rat {
    type Error = RatParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((self.0).$method(rhs.0))
            }
        }
        impl $trait for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((self.0).$method(&rhs.0))
            }
        }
        impl $trait<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(self.0 / rhs.0)
    }
}

impl Div for &Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / &rhs.0)
    }
}

impl Div<&Rat> for Rat {
    type Output = Rat;
    fn div(self, rhs: &Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(self.0 / &rhs.0)
    }
}

impl Div<Rat> for &Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat(&self.0 / rhs.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Rat> for Rat {
    fn sub_assign(&mut self, rhs: &Rat) {
        self.0 -= &rhs.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_terms_and_positive_denominator() {
        let r = Rat::new(6, -8);
        assert_eq!(r.to_string(), "-3/4");
        assert_eq!(r, "-3/4".parse().unwrap());
        assert_eq!(r, "3/-4".parse().unwrap());
    }

    #[test]
    fn pow2_both_signs() {
        assert_eq!(Rat::pow2(3), Rat::from_int(8));
        assert_eq!(Rat::pow2(-3), Rat::new(1, 8));
        assert_eq!(Rat::pow2(0), Rat::one());
    }

    #[test]
    fn dyadic_detection() {
        assert!(Rat::new(3, 8).is_dyadic());
        assert!(Rat::from_int(5).is_dyadic());
        assert!(!Rat::new(1, 3).is_dyadic());
        assert!(!Rat::new(5, 6).is_dyadic());
        let (m, k) = Rat::new(3, 8).dyadic_parts().unwrap();
        assert_eq!((m.to_string().as_str(), k), ("3", 3));
        assert!(Rat::new(-1, 2).dyadic_parts().is_none());
    }

    #[test]
    fn parse_rejects_decimals() {
        assert!(matches!(
            "0.5".parse::<Rat>(),
            Err(RatParseError::DecimalRejected(_))
        ));
        assert!(matches!(
            "1e-3".parse::<Rat>(),
            Err(RatParseError::Malformed(_)) | Err(RatParseError::DecimalRejected(_))
        ));
        assert!(matches!(
            "1/0".parse::<Rat>(),
            Err(RatParseError::ZeroDenominator(_))
        ));
    }

    #[test]
    fn display_roundtrip() {
        for s in ["7/8", "-11/64", "0/1", "42/1"] {
            let r: Rat = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        // integer shorthand parses, prints canonically
        assert_eq!("5".parse::<Rat>().unwrap().to_string(), "5/1");
    }

    #[test]
    fn exact_arithmetic() {
        let a = Rat::new(1, 3);
        let b = Rat::new(1, 6);
        assert_eq!(&a + &b, Rat::new(1, 2));
        assert_eq!(&a - &b, Rat::new(1, 6));
        assert_eq!(&a * &b, Rat::new(1, 18));
        assert_eq!(&a / &b, Rat::from_int(2));
        assert_eq!((&a - &a).signum(), 0);
    }
}
