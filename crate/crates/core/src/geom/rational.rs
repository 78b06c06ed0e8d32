//! Exact rational scalars.
//!
//! `BigRational` already keeps values normalized (lowest terms, positive
//! denominator) after every operation, which is the invariant the rest of the
//! crate relies on for equality tests.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub type Rational = num_rational::BigRational;

/// Parses `"a/b"`, `"a"` or a finite decimal such as `"-0.125"` exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((int_part, frac_part)) = text.split_once('.') {
        if text.contains('/') {
            return None;
        }
        let negative = int_part.starts_with('-');
        let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let numer: BigInt = digits.parse().ok()?;
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        let value = Rational::new(numer, denom);
        return Some(if negative { -value } else { value });
    }
    let value: Rational = text.parse().ok()?;
    Some(value)
}

pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// `"num/den"` with the denominator always present.
pub fn to_fraction_string(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Decimal rendering rounded to `digits` significant digits. Advisory only.
pub fn to_decimal_string(value: &Rational, digits: usize) -> String {
    if value.is_zero() {
        return "0".to_string();
    }
    let negative = value.is_negative();
    let magnitude = value.abs();
    let ten = BigInt::from(10);

    // Find exponent e with 10^e <= magnitude < 10^(e+1).
    let mut exponent: i64 = 0;
    let mut scaled = magnitude.clone();
    let ten_r = Rational::from_integer(ten.clone());
    while scaled >= ten_r {
        scaled /= &ten_r;
        exponent += 1;
    }
    while scaled < Rational::one() {
        scaled *= &ten_r;
        exponent -= 1;
    }
    // scaled in [1, 10): take digits significant digits with rounding.
    let shift = num_traits::pow(ten.clone(), digits.saturating_sub(1));
    let mut mantissa = (scaled * Rational::from_integer(shift.clone()) + rational(1, 2))
        .floor()
        .to_integer();
    if mantissa >= &shift * &ten {
        mantissa = mantissa.div_floor(&ten);
        exponent += 1;
    }
    let mut text = mantissa.to_string();
    let point_pos = exponent + 1;
    let rendered = if point_pos <= 0 {
        format!("0.{}{}", "0".repeat((-point_pos) as usize), text)
    } else if point_pos as usize >= text.len() {
        text.push_str(&"0".repeat(point_pos as usize - text.len()));
        text
    } else {
        let (head, tail) = text.split_at(point_pos as usize);
        format!("{head}.{tail}")
    };
    let rendered = if rendered.contains('.') {
        rendered.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        rendered
    };
    if negative {
        format!("-{rendered}")
    } else {
        rendered
    }
}

/// Bits in the larger of numerator magnitude and denominator.
pub fn bit_size(value: &Rational) -> u64 {
    value.numer().bits().max(value.denom().bits())
}

/// Nearest multiple of `2^-bits` (ties away from zero).
pub fn round_to_dyadic(value: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits;
    let scaled = value * Rational::from_integer(scale.clone());
    Rational::new(scaled.round().to_integer(), scale)
}
