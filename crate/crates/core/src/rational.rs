//! Exact rational helpers.
//!
//! [`Rational`] is `num_rational::BigRational`: always reduced, positive
//! denominator, no rounding. This module adds the parsing and rendering used
//! by configs and reports, plus the few grid operations the fixed-point
//! layer and the simulator need.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid rational literal '{0}' (expected an integer, a decimal or 'num/den')")]
pub struct ParseRationalError(pub String);

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Rational {
    let p = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

/// Parses `"-3"`, `"0.0511"`, `"1e-4"`, `"-513.9303"` or `"7/2"`.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = t[i + 1..].parse().map_err(|_| err())?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
    if (ip.is_empty() && fp.is_empty())
        || !ip.chars().all(|c| c.is_ascii_digit())
        || !fp.chars().all(|c| c.is_ascii_digit())
    {
        return Err(err());
    }
    let digits: BigInt = format!("{ip}{fp}").parse().map_err(|_| err())?;
    let scale = exp - fp.len() as i64;
    let ten = BigInt::from(10u32);
    let mut r = Rational::from_integer(digits);
    if scale >= 0 {
        r *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -r } else { r })
}

/// Exact `"num/den"` rendering (always with a denominator).
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Decimal rendering with `sig` significant digits, trailing zeros
/// stripped, switching to exponent notation outside `1e-4 .. 10^sig`
/// (same conventions as C's `%g`).
pub fn format_decimal(r: &Rational, sig: usize) -> String {
    assert!(sig >= 1);
    if r.is_zero() {
        return "0".to_string();
    }
    let neg = r.is_negative();
    let a = r.abs();
    let mut e = estimate_exp10(&a);
    // digits = round(a * 10^(sig-1-e)); fix e if rounding lands outside [10^(sig-1), 10^sig)
    let lo = num_traits::pow(BigInt::from(10), sig - 1);
    let hi = &lo * BigInt::from(10);
    let digits = loop {
        let d = round_half_away(&(&a * pow10(sig as i64 - 1 - e)));
        if d >= hi {
            e += 1;
        } else if d < lo {
            e -= 1;
        } else {
            break d;
        }
    };
    let ds = digits.to_string();
    let body = if e < -4 || e >= sig as i64 {
        let (first, rest) = ds.split_at(1);
        let rest = rest.trim_end_matches('0');
        if rest.is_empty() {
            format!("{first}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        } else {
            format!("{first}.{rest}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
    } else if e >= 0 {
        let (ip, fp) = ds.split_at((e + 1) as usize);
        let fp = fp.trim_end_matches('0');
        if fp.is_empty() {
            ip.to_string()
        } else {
            format!("{ip}.{fp}")
        }
    } else {
        let zeros = "0".repeat((-e - 1) as usize);
        format!("0.{zeros}{}", ds.trim_end_matches('0'))
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn pow10(e: i64) -> Rational {
    let p = num_traits::pow(BigInt::from(10), e.unsigned_abs() as usize);
    if e >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

fn estimate_exp10(a: &Rational) -> i64 {
    let bits = a.numer().bits() as i64 - a.denom().bits() as i64;
    (bits as f64 * std::f64::consts::LOG10_2).floor() as i64
}

/// Nearest integer, ties away from zero.
pub fn round_half_away(r: &Rational) -> BigInt {
    let half = ratio(1, 2);
    if r.is_negative() {
        -(-r + half).floor().to_integer()
    } else {
        (r + half).floor().to_integer()
    }
}

/// Integer division `n / d` rounded to nearest, ties away from zero. `d > 0`.
pub fn div_round_half_away(n: &BigInt, d: &BigInt) -> BigInt {
    debug_assert!(d.is_positive());
    let (q, r) = n.abs().div_rem(d);
    let twice: BigInt = r << 1;
    let q = if twice >= *d { q + 1 } else { q };
    if n.sign() == Sign::Minus {
        -q
    } else {
        q
    }
}

/// Nearest multiple of `2^-bits`, ties away from zero.
pub fn round_to_dyadic(r: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits;
    let n = div_round_half_away(&(r.numer() * &scale), r.denom());
    Rational::new(n, scale)
}

/// Largest multiple of `step` that is `<= r`.
pub fn floor_to_grid(r: &Rational, step: &Rational) -> Rational {
    (r / step).floor() * step
}

/// Smallest multiple of `step` that is `>= r`.
pub fn ceil_to_grid(r: &Rational, step: &Rational) -> Rational {
    (r / step).ceil() * step
}

/// Lossy conversion for plotting and tolerance checks only.
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}
