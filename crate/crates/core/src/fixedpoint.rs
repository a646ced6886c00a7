//! Signed fixed-point values built from bit streams.
//!
//! A [`SignedFixedPoint`] is a sign plus two [`BitStream`]s: `p` fraction
//! bits and `q` integer bits, as fixed by a [`FixedPointSpec`]. Its value is
//! `±(integer + fraction · 2^-p)`, so the representable set is the `2^-p`
//! grid on `[-M, M]` with `M = 2^q - 2^-p`.
//!
//! Overflow is handled by wrapping: the integer part keeps its low `q` bits
//! and the result is marked dirty. Encoding rounds to the nearest grid point
//! (ties away from zero); multiplication truncates toward zero.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign as BigSign};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitstream::{BitStream, BitStreamError, Terminal};
use crate::rational::{format_rational, pow2, Rational};

/// Largest `p + q` accepted by [`FixedPointSpec::enumerate_values`].
pub const MAX_ENUMERATION_BITS: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FixedPointError {
    #[error("invalid fixed-point spec p={p}, q={q}: both need at least one bit")]
    InvalidSpec { p: u32, q: u32 },
    #[error("value {value} outside encodable premise |a| <= {bound}")]
    OutsidePremise { value: String, bound: String },
    #[error("cannot decode overflow-tainted value {0}")]
    Dirty(String),
    #[error("{units} grid units do not fit in p={p}, q={q}")]
    UnitsOutOfRange { units: String, p: u32, q: u32 },
    #[error("enumeration of p={p}, q={q} refused: p + q must be at most {limit}")]
    EnumerationGuard { p: u32, q: u32, limit: u32 },
}

impl From<BitStreamError> for FixedPointError {
    fn from(e: BitStreamError) -> Self {
        match e {
            BitStreamError::Dirty(s) => FixedPointError::Dirty(s),
        }
    }
}

/// Only wrapping is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowMode {
    #[default]
    Wrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct FixedPointSpec {
    frac_bits: u32,
    int_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    p: u32,
    q: u32,
}

impl TryFrom<RawSpec> for FixedPointSpec {
    type Error = FixedPointError;
    fn try_from(r: RawSpec) -> Result<Self, Self::Error> {
        FixedPointSpec::new(r.p, r.q)
    }
}

impl From<FixedPointSpec> for RawSpec {
    fn from(s: FixedPointSpec) -> Self {
        RawSpec { p: s.frac_bits, q: s.int_bits }
    }
}

impl FixedPointSpec {
    pub fn new(p: u32, q: u32) -> Result<Self, FixedPointError> {
        if p == 0 || q == 0 {
            return Err(FixedPointError::InvalidSpec { p, q });
        }
        Ok(Self { frac_bits: p, int_bits: q })
    }

    /// `p`
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// `q`
    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn word_bits(&self) -> u32 {
        self.frac_bits + self.int_bits
    }

    pub fn overflow_mode(&self) -> OverflowMode {
        OverflowMode::Wrap
    }

    /// Grid step `2^-p`.
    pub fn step(&self) -> Rational {
        pow2(-(self.frac_bits as i64))
    }

    /// `M = 2^q - 2^-p`, the largest representable magnitude.
    pub fn max_magnitude(&self) -> Rational {
        pow2(self.int_bits as i64) - self.step()
    }

    /// `2^q`, the analytic envelope used in the error-bound premises.
    pub fn envelope(&self) -> Rational {
        pow2(self.int_bits as i64)
    }

    /// `(-M, M)`.
    pub fn value_domain(&self) -> (Rational, Rational) {
        let m = self.max_magnitude();
        (-m.clone(), m)
    }

    /// `2^(p+q) - 1`, the largest magnitude in grid units.
    pub fn max_units(&self) -> BigUint {
        (BigUint::one() << self.word_bits()) - BigUint::one()
    }

    pub fn contains(&self, a: &Rational) -> bool {
        a.abs() <= self.max_magnitude()
    }

    /// True when `a` lies on the grid inside the value domain.
    pub fn is_representable(&self, a: &Rational) -> bool {
        self.contains(a) && (a / self.step()).is_integer()
    }

    /// Every clean canonical value in increasing order:
    /// `2^(p+q+1) - 1` values from `-M` to `M`.
    pub fn enumerate_values(&self) -> Result<Vec<SignedFixedPoint>, FixedPointError> {
        if self.word_bits() > MAX_ENUMERATION_BITS {
            return Err(FixedPointError::EnumerationGuard {
                p: self.frac_bits,
                q: self.int_bits,
                limit: MAX_ENUMERATION_BITS,
            });
        }
        let max = (1i64 << self.word_bits()) - 1;
        Ok((-max..=max)
            .map(|u| SignedFixedPoint::from_units_unchecked(&BigInt::from(u), *self))
            .collect())
    }
}

impl fmt::Display for FixedPointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, q={})", self.frac_bits, self.int_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }

    fn xor(self, other: Sign) -> Sign {
        if self == other {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

/// Sign plus fraction and integer streams. Zero magnitude is always
/// [`Sign::Positive`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedFixedPoint {
    sign: Sign,
    fraction: BitStream,
    integer: BitStream,
}

impl SignedFixedPoint {
    /// Fraction first, integer second. Negative zero is normalised away.
    pub fn new(sign: Sign, fraction: BitStream, integer: BitStream) -> Self {
        let sign = if fraction.is_zero() && integer.is_zero() {
            Sign::Positive
        } else {
            sign
        };
        Self { sign, fraction, integer }
    }

    pub fn zero(spec: FixedPointSpec) -> Self {
        Self::from_units_unchecked(&BigInt::zero(), spec)
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn fraction(&self) -> &BitStream {
        &self.fraction
    }

    pub fn integer(&self) -> &BitStream {
        &self.integer
    }

    pub fn is_clean(&self) -> bool {
        self.fraction.is_clean() && self.integer.is_clean()
    }

    pub fn conforms_to(&self, spec: FixedPointSpec) -> bool {
        self.fraction.len() == spec.frac_bits() as usize
            && self.integer.len() == spec.int_bits() as usize
    }

    /// Concatenated magnitude stream: `integer · 2^p + fraction`.
    pub fn magnitude(&self) -> BitStream {
        self.fraction.concat(&self.integer)
    }

    fn from_magnitude(sign: Sign, mag: &BitStream, spec: FixedPointSpec) -> Self {
        let p = spec.frac_bits() as usize;
        let q = spec.int_bits() as usize;
        Self::new(sign, mag.slice(0, p), mag.slice(p, q))
    }

    /// Signed count of `2^-p` units held in the bits, ignoring cleanliness.
    pub fn raw_units(&self) -> BigInt {
        let mag = BigInt::from_biguint(BigSign::Plus, self.magnitude().raw_natural());
        match self.sign {
            Sign::Positive => mag,
            Sign::Negative => -mag,
        }
    }

    /// Exact value; dirty values are refused.
    pub fn decode(&self) -> Result<Rational, FixedPointError> {
        if !self.is_clean() {
            return Err(FixedPointError::Dirty(self.to_string()));
        }
        Ok(self.decode_wrapped())
    }

    /// Value of the stored (possibly wrapped) bits, as a register would
    /// hold it after overflow.
    pub fn decode_wrapped(&self) -> Rational {
        Rational::new(self.raw_units(), BigInt::one() << self.fraction.len())
    }

    /// Builds the value `units · 2^-p`; fails when `|units| > 2^(p+q) - 1`.
    pub fn from_units(units: &BigInt, spec: FixedPointSpec) -> Result<Self, FixedPointError> {
        if units.magnitude() > &spec.max_units() {
            return Err(FixedPointError::UnitsOutOfRange {
                units: units.to_string(),
                p: spec.frac_bits(),
                q: spec.int_bits(),
            });
        }
        Ok(Self::from_units_unchecked(units, spec))
    }

    fn from_units_unchecked(units: &BigInt, spec: FixedPointSpec) -> Self {
        let sign = if units.is_negative() { Sign::Negative } else { Sign::Positive };
        let mag = BitStream::from_natural(units.magnitude());
        Self::from_magnitude(sign, &mag, spec)
    }

    /// Nearest grid value to `a`, ties away from zero. Requires `|a| <= 2^q`;
    /// values in `(M, 2^q]` clamp to `±M`.
    pub fn encode(a: &Rational, spec: FixedPointSpec) -> Result<Self, FixedPointError> {
        if a.abs() > spec.envelope() {
            return Err(FixedPointError::OutsidePremise {
                value: format_rational(a),
                bound: format_rational(&spec.envelope()),
            });
        }
        let units = nearest_units(a, spec).min(spec.max_units());
        let sign = if a.is_negative() { Sign::Negative } else { Sign::Positive };
        Ok(Self::from_magnitude(sign, &BitStream::from_natural(&units), spec))
    }

    /// Like [`encode`](Self::encode) but never fails: magnitudes beyond the
    /// grid wrap modulo `2^(p+q)` and the result is marked dirty. Models an
    /// input register that receives an out-of-range sample.
    pub fn encode_wrapping(a: &Rational, spec: FixedPointSpec) -> Self {
        let units = nearest_units(a, spec);
        let sign = if a.is_negative() { Sign::Negative } else { Sign::Positive };
        let mag = BitStream::from_natural(&units).add_limited(&BitStream::empty(), spec.word_bits() as usize);
        Self::from_magnitude(sign, &mag, spec)
    }

    /// Same bits with the overflow marks cleared, as a register reads back
    /// after the status flag is discarded.
    pub fn laundered(&self) -> Self {
        Self::new(
            self.sign,
            self.fraction.clone().with_terminal(Terminal::Clean),
            self.integer.clone().with_terminal(Terminal::Clean),
        )
    }

    pub fn neg(&self) -> Self {
        Self::new(self.sign.flip(), self.fraction.clone(), self.integer.clone())
    }

    /// Sign-magnitude addition on the concatenated `p + q` bit magnitudes.
    /// Same signs add with wrap-around on `p + q` bits; opposite signs
    /// subtract the smaller magnitude from the larger and can never
    /// overflow.
    pub fn add(&self, rhs: &Self, spec: FixedPointSpec) -> Self {
        debug_assert!(self.conforms_to(spec) && rhs.conforms_to(spec));
        let width = spec.word_bits() as usize;
        let (m1, m2) = (self.magnitude(), rhs.magnitude());
        if self.sign == rhs.sign {
            let sum = m1.add_limited(&m2, width);
            return Self::from_magnitude(self.sign, &sum, spec);
        }
        let (sign, diff) = match m1.cmp_bits(&m2) {
            Ordering::Less => (rhs.sign, m2.checked_sub(&m1)),
            _ => (self.sign, m1.checked_sub(&m2)),
        };
        let diff = diff.expect("larger magnitude minus smaller is non-negative");
        Self::from_magnitude(sign, &diff, spec)
    }

    pub fn sub(&self, rhs: &Self, spec: FixedPointSpec) -> Self {
        self.add(&rhs.neg(), spec)
    }

    /// Cross-term multiplication of `(f1 + i1·2^p)(f2 + i2·2^p) / 2^2p`.
    ///
    /// The fraction part is the low `p` bits of `f1·i2 + i1·f2 + ⌊f1·f2 / 2^p⌋`;
    /// the integer part is `i1·i2` plus the bits of that sum above `p`, both
    /// limited to `q` bits. Bits of `f1·f2` below `2^-p` are dropped
    /// (truncation toward zero). The result is dirty iff the exact product
    /// magnitude exceeds `M`.
    pub fn times(&self, rhs: &Self, spec: FixedPointSpec) -> Self {
        debug_assert!(self.conforms_to(spec) && rhs.conforms_to(spec));
        let p = spec.frac_bits() as usize;
        let q = spec.int_bits() as usize;
        let (f1, i1) = (&self.fraction, &self.integer);
        let (f2, i2) = (&rhs.fraction, &rhs.integer);

        let cross = f1.mul_unbounded(i2).add_unbounded(&i1.mul_unbounded(f2));
        let ff = f1.mul_unbounded(f2);
        let mid = cross.add_unbounded(&ff.slice(p, p));
        let fraction = mid.truncate(p);
        let carry = mid.slice(p, mid.len().saturating_sub(p));
        let mut integer = i1.mul_limited(i2, q).add_limited(&carry, q).truncate(q);

        // Truncated magnitude sits exactly at M while discarded bits are
        // non-zero: the exact product lies in (M, 2^q), outside the domain.
        if integer.is_clean()
            && integer.is_all_ones()
            && fraction.is_all_ones()
            && !ff.truncate(p).is_zero()
        {
            integer = integer.into_dirty();
        }
        let terminal = fraction.terminal().join(integer.terminal());
        let fraction = fraction.with_terminal(terminal);
        let integer = integer.with_terminal(fraction.terminal());
        Self::new(self.sign.xor(rhs.sign), fraction, integer)
    }

    /// `self <= rhs` by decoded value; both must be clean.
    pub fn leq(&self, rhs: &Self) -> Result<bool, FixedPointError> {
        Ok(self.decode()? <= rhs.decode()?)
    }
}

fn nearest_units(a: &Rational, spec: FixedPointSpec) -> BigUint {
    let scaled = a.abs() * pow2(spec.frac_bits() as i64) + Rational::new(BigInt::one(), BigInt::from(2));
    scaled
        .floor()
        .to_integer()
        .to_biguint()
        .expect("non-negative")
}

fn msb_first(v: &BitStream) -> String {
    v.bits()
        .iter()
        .rev()
        .map(|b| if b.is_one() { '1' } else { '0' })
        .collect()
}

/// `±integer.fraction` with both parts MSB-first, e.g. `+0.11`; a trailing
/// `X` marks a dirty value.
impl fmt::Display for SignedFixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.sign {
            Sign::Positive => '+',
            Sign::Negative => '-',
        };
        write!(f, "{s}{}.{}", msb_first(&self.integer), msb_first(&self.fraction))?;
        if !self.is_clean() {
            f.write_str("X")?;
        }
        Ok(())
    }
}
