//! Physical quantities with optional unit suffixes, converted to SI.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

const UNITS: &[(&str, f64)] = &[
    ("GPa", 1e9),
    ("MPa", 1e6),
    ("kPa", 1e3),
    ("Pa", 1.0),
    ("MN", 1e6),
    ("kN", 1e3),
    ("N", 1.0),
    ("km", 1e3),
    ("mm", 1e-3),
    ("cm", 1e-2),
    ("m", 1.0),
];

/// Parses `"3 GPa"`, `"-1.5e4kN"`, `"20 mm"` or a bare number.
pub fn parse_quantity(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| c.is_ascii_alphabetic() && !is_exponent(t, i))
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = (t[..split].trim(), t[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("invalid number in `{text}`"))?;
    let scale = if unit.is_empty() {
        1.0
    } else {
        UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, s)| *s)
            .ok_or_else(|| format!("unknown unit `{unit}` in `{text}`"))?
    };
    let v = value * scale;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite quantity `{text}`"))
    }
}

/// An `e`/`E` that belongs to a float exponent, e.g. the `e` of `1e-3`.
fn is_exponent(t: &str, i: usize) -> bool {
    let b = t.as_bytes();
    matches!(b[i], b'e' | b'E')
        && i > 0
        && (b[i - 1].is_ascii_digit() || b[i - 1] == b'.')
        && b.get(i + 1)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'-' || *c == b'+')
}

/// A real number in SI units, written as a TOML number or a string with a
/// unit suffix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity(pub f64);

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct QVisitor;

        impl Visitor<'_> for QVisitor {
            type Value = Quantity;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"3 GPa\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Ok(Quantity(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                Ok(Quantity(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Quantity, E> {
                parse_quantity(v).map(Quantity).map_err(E::custom)
            }
        }

        d.deserialize_any(QVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_quantity("3 GPa").unwrap(), 3e9);
        assert_eq!(parse_quantity("3GPa").unwrap(), 3e9);
        assert_eq!(parse_quantity("-1.5e4 kN").unwrap(), -1.5e7);
        assert_eq!(parse_quantity("20 mm").unwrap(), 0.02);
        assert_eq!(parse_quantity("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_quantity("2E+2 N").unwrap(), 200.0);
        assert!(parse_quantity("3 furlongs").is_err());
        assert!(parse_quantity("GPa").is_err());
    }
}
