//! Exact rational helpers.
//!
//! Values are carried as arbitrary precision rationals so that tie and zero
//! detection stays exact. Hot loops use the scaled integer rows in
//! [`crate::model::Row`] instead.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn frac(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Parses `p/q`, an integer, or an exact decimal such as `0.25` or `-1.5`.
pub fn parse_rational(token: &str) -> Result<Rational> {
    let bad = || Error::BadValueToken(token.to_string());
    let s = token.trim();
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((p, q)) = s.split_once('/') {
        let numer: BigInt = p.trim().parse().map_err(|_| bad())?;
        let denom: BigInt = q.trim().parse().map_err(|_| bad())?;
        if denom.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(numer, denom));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, fraction) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && fraction.is_empty() {
        return Err(bad());
    }
    if !whole.chars().chain(fraction.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all_digits = format!("{whole}{fraction}");
    let mut numer: BigInt = if all_digits.is_empty() {
        BigInt::zero()
    } else {
        all_digits.parse().map_err(|_| bad())?
    };
    if negative {
        numer = -numer;
    }
    let scale = exponent - fraction.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// `⌈log2 x⌉` with `⌈log2 1⌉ = 0`. `x = 0` is treated as 1.
pub fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        u64::from(64 - (x - 1).leading_zeros())
    }
}

pub fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Exact test of `value >= base - sqrt(radicand)` for `radicand >= 0`.
pub fn ge_base_minus_sqrt(value: &Rational, base: &Rational, radicand: &Rational) -> bool {
    let gap = base - value;
    if !gap.is_positive() {
        return true;
    }
    *radicand >= &gap * &gap
}

/// Exact test of `x^2 >= radicand` for `x >= 0`, i.e. `x >= sqrt(radicand)`.
pub fn ge_sqrt(x: &Rational, radicand: &Rational) -> bool {
    !x.is_negative() && &(x * x) >= radicand
}

/// Serde adapter writing rationals as `"p/q"` strings and reading strings or numbers.
pub mod serde_string {
    use super::{format_rational, Rational};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        super::from_json(&raw).map_err(de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(values: &[Rational], serializer: S) -> Result<S::Ok, S::Error> {
            let mut seq = serializer.serialize_seq(Some(values.len()))?;
            for v in values {
                seq.serialize_element(&format_rational(v))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Rational>, D::Error> {
            let raw = Vec::<serde_json::Value>::deserialize(deserializer)?;
            raw.iter()
                .map(|v| super::super::from_json(v).map_err(de::Error::custom))
                .collect()
        }
    }
}

/// Reads a rational from a JSON string (`"p/q"`, decimal) or JSON number token.
pub fn from_json(raw: &serde_json::Value) -> Result<Rational> {
    match raw {
        serde_json::Value::String(s) => parse_rational(s),
        serde_json::Value::Number(n) => parse_rational(&n.to_string()),
        other => Err(Error::BadValueToken(other.to_string())),
    }
}
