//! Exact rational arithmetic helpers.
//!
//! `num_rational::BigRational` already maintains the invariants the rest of
//! the crate relies on (stored reduced, positive denominator), so this module
//! only adds the handful of operations the construction keeps reaching for:
//! reduction mod 1, exact grid-index conversions and decimal-string
//! (de)serialization for reports, where every integer travels as a string.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Rational from two machine integers. Panics on zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn big(n: u64) -> BigInt {
    BigInt::from(n)
}

/// Representative of x in [0, 1): exact reduction mod 1.
pub fn mod1(x: &Rational) -> Rational {
    let f = x.floor();
    x - f
}

/// True iff x ≡ y (mod 1).
pub fn eq_mod1(x: &Rational, y: &Rational) -> bool {
    (x - y).is_integer()
}

/// x·den as an exact integer, or None when x is not on the 1/den grid.
pub fn grid_index(x: &Rational, den: u64) -> Option<BigInt> {
    let scaled = x * Rational::from_integer(BigInt::from(den));
    scaled.is_integer().then(|| scaled.to_integer())
}

/// Euclidean remainder of a mod m with m > 0; result in [0, m).
pub fn rem_euclid(a: &BigInt, m: &BigInt) -> BigInt {
    let r = a % m;
    if r.sign() == Sign::Minus {
        r + m
    } else {
        r
    }
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Fall back on a scaled division for out-of-range components.
        let n = x.numer().to_f64().unwrap_or(f64::INFINITY * sign_f(x));
        let d = x.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

fn sign_f(x: &Rational) -> f64 {
    if x.is_negative() {
        -1.0
    } else {
        1.0
    }
}

/// "num/den" with both parts in decimal; denominator printed even when 1 so
/// the report format stays uniform and exactly re-parseable.
pub fn rational_string(x: &Rational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().ok()?;
    let d: BigInt = d.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(Rational::new(n, d))
}

/// Serde adapters: big integers as decimal strings.
pub mod bigint_string {
    use num_bigint::BigInt;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| D::Error::custom("invalid integer"))
    }
}

/// Serde adapters: rationals as "num/den" decimal strings.
pub mod rational_string_serde {
    use super::{parse_rational, rational_string, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational_string(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).ok_or_else(|| D::Error::custom("invalid rational"))
    }
}

/// Exact value of (1 − 2δ)^e.
pub fn one_minus_two_delta_pow(delta: &Rational, e: u32) -> Rational {
    let base = Rational::one() - rat_int(2) * delta;
    let mut acc = Rational::one();
    for _ in 0..e {
        acc *= &base;
    }
    acc
}
