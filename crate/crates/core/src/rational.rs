//! Exact rational arithmetic for attack probabilities, criticality levels
//! and vulnerability indices.

use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

use crate::{Error, Result};

pub type Rational = Ratio<i64>;

/// Parses `"3/20"`, `"0.15"`, `"2"` or `"-1.5e-2"` exactly.
pub fn parse(text: &str) -> Result<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad(text))?;
        let den: i64 = den.trim().parse().map_err(|_| bad(text))?;
        if den == 0 {
            return Err(bad(text));
        }
        return Ok(Rational::new(num, den));
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Result<Rational> {
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = text[pos + 1..].parse().map_err(|_| bad(text))?;
            (&text[..pos], exp)
        }
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad(text));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad(text));
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut num: i64 = if all.is_empty() { 0 } else { all.parse().map_err(|_| bad(text))? };
    let scale = exp - frac_part.len() as i32;
    let mut den: i64 = 1;
    if scale >= 0 {
        for _ in 0..scale {
            num = num.checked_mul(10).ok_or_else(|| bad(text))?;
        }
    } else {
        for _ in 0..(-scale) {
            den = den.checked_mul(10).ok_or_else(|| bad(text))?;
        }
    }
    if negative {
        num = -num;
    }
    Ok(Rational::new(num, den))
}

fn bad(text: &str) -> Error {
    Error::config(format!("cannot parse {text:?} as an exact rational"))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Formats as `n` or `n/d`.
pub fn format(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Sum of a sequence of rationals.
pub fn sum<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values.into_iter().fold(Rational::zero(), |acc, v| acc + v)
}

/// Serde adapter: writes `"n/d"`, reads strings or JSON numbers (through
/// their shortest decimal representation, so `0.1` is exactly 1/10).
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&format(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Rational, D::Error> {
        de.deserialize_any(RationalVisitor)
    }

    struct RationalVisitor;

    impl Visitor<'_> for RationalVisitor {
        type Value = Rational;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a rational as a number or a string like \"3/20\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rational, E> {
            let v = i64::try_from(v).map_err(E::custom)?;
            Ok(Rational::from_integer(v))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rational, E> {
            Ok(Rational::from_integer(v))
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rational, E> {
            parse(&format!("{v}")).map_err(E::custom)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rational, E> {
            parse(v).map_err(E::custom)
        }
    }
}

/// Same as [`serde_rational`] for vectors.
pub mod serde_rational_vec {
    use super::*;
    use serde::de::SeqAccess;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(values: &[Rational], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<Rational>, D::Error> {
        struct Wrapped(Rational);
        impl<'de> serde::Deserialize<'de> for Wrapped {
            fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
                super::serde_rational::deserialize(de).map(Wrapped)
            }
        }
        struct SeqVisitor;
        impl<'de> Visitor<'de> for SeqVisitor {
            type Value = Vec<Rational>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of rationals")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(Wrapped(v)) = seq.next_element()? {
                    out.push(v);
                }
                Ok(out)
            }
        }
        de.deserialize_seq(SeqVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse("0.1").unwrap(), Rational::new(1, 10));
        assert_eq!(parse("0.14").unwrap(), Rational::new(7, 50));
        assert_eq!(parse("2").unwrap(), Rational::from_integer(2));
        assert_eq!(parse("-1.5e-2").unwrap(), Rational::new(-3, 200));
        assert_eq!(parse("3/20").unwrap(), Rational::new(3, 20));
        assert_eq!(parse(".5").unwrap(), Rational::new(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn json_number_is_read_through_decimal_text() {
        #[derive(serde::Deserialize)]
        struct W {
            #[serde(with = "serde_rational")]
            v: Rational,
        }
        let w: W = serde_json::from_str(r#"{"v": 0.3}"#).unwrap();
        assert_eq!(w.v, Rational::new(3, 10));
        let w: W = serde_json::from_str(r#"{"v": "1/3"}"#).unwrap();
        assert_eq!(w.v, Rational::new(1, 3));
    }
}
