//! Exact fractions and their `"p/q"` document form.
//!
//! Every rational that crosses a serialization boundary (configs, ledgers,
//! reports, CSV) travels as a string `"p/q"` (or plain `"p"`), never as a
//! float.

use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Parse `"p/q"` or `"p"` into an exact rational. Whitespace around the
/// slash is tolerated; a zero denominator is rejected.
pub fn parse_fraction(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (s, None),
    };
    let n = BigInt::from_str(num).map_err(|e| format!("bad numerator {num:?}: {e}"))?;
    let d = match den {
        Some(d) => BigInt::from_str(d).map_err(|e| format!("bad denominator {d:?}: {e}"))?,
        None => BigInt::one(),
    };
    if d.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(BigRational::new(n, d))
}

/// Render a rational in reduced `"p/q"` form (`"p"` when the denominator
/// is one).
pub fn format_fraction(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// An exact rational wrapper that serializes as a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Frac(pub BigRational);

impl Frac {
    pub fn zero() -> Self {
        Frac(BigRational::zero())
    }

    pub fn abs(&self) -> Frac {
        Frac(self.0.abs())
    }
}

impl From<BigRational> for Frac {
    fn from(r: BigRational) -> Self {
        Frac(r)
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_fraction(&self.0))
    }
}

impl FromStr for Frac {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fraction(s).map(Frac)
    }
}

impl Serialize for Frac {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_fraction(&self.0))
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_fraction(&s).map(Frac).map_err(serde::de::Error::custom)
    }
}

/// `p/q` from machine integers, for tests and small constants.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_slash_forms() {
        assert_eq!(parse_fraction("3").unwrap(), ratio(3, 1));
        assert_eq!(parse_fraction("-1/2").unwrap(), ratio(-1, 2));
        assert_eq!(parse_fraction(" 4 / 6 ").unwrap(), ratio(2, 3));
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x").is_err());
    }

    #[test]
    fn formats_reduced() {
        assert_eq!(format_fraction(&ratio(4, 6)), "2/3");
        assert_eq!(format_fraction(&ratio(-8, 2)), "-4");
    }
}
