//! Finite binary streams with a clean or overflow terminal.
//!
//! A [`BitStream`] stores its bits least-significant first and ends in a
//! [`Terminal`]. A stream ending in [`Terminal::Overflow`] is *dirty*: its
//! bits are still kept (they are what a wrapping register would hold) but it
//! has no numeric interpretation, and every operation that touches it yields
//! a dirty result.
//!
//! Each arithmetic operation comes in two flavours. The unbounded versions
//! grow the result as needed and can never overflow. The limited versions
//! take a maximum length, wrap the exact result modulo `2^max_len` when it
//! does not fit, and mark the result dirty.
//!
//! All arithmetic here works bit by bit (ripple carry, shift-and-add); the
//! conversions to and from [`BigUint`] exist to bridge into exact oracles.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    #[inline]
    pub fn is_one(self) -> bool {
        matches!(self, Bit::One)
    }

    #[inline]
    pub fn from_bool(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

/// End marker of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Clean,
    Overflow,
}

impl Terminal {
    /// Overflow wins: combining anything with a dirty terminal is dirty.
    #[inline]
    pub fn join(self, other: Terminal) -> Terminal {
        if self == Terminal::Overflow || other == Terminal::Overflow {
            Terminal::Overflow
        } else {
            Terminal::Clean
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitStreamError {
    #[error("overflow-tainted value has no numeric interpretation: {0}")]
    Dirty(String),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitStream {
    bits: Vec<Bit>,
    terminal: Terminal,
}

impl BitStream {
    pub fn new(bits: Vec<Bit>, terminal: Terminal) -> Self {
        Self { bits, terminal }
    }

    pub fn clean(bits: Vec<Bit>) -> Self {
        Self::new(bits, Terminal::Clean)
    }

    /// The empty clean stream `[]o`, value 0.
    pub fn empty() -> Self {
        Self::clean(Vec::new())
    }

    /// Builds a stream from booleans, least-significant bit first.
    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I, terminal: Terminal) -> Self {
        Self::new(bits.into_iter().map(Bit::from_bool).collect(), terminal)
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }

    pub fn terminal(&self) -> Terminal {
        self.terminal
    }

    /// Number of bits, excluding the terminal. Counts bits of dirty streams too.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.terminal == Terminal::Clean
    }

    /// Same bits, overflow terminal.
    pub fn into_dirty(mut self) -> Self {
        self.terminal = Terminal::Overflow;
        self
    }

    pub fn with_terminal(mut self, terminal: Terminal) -> Self {
        self.terminal = terminal;
        self
    }

    /// True when no bit is set (regardless of the terminal).
    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|b| !b.is_one())
    }

    /// True when every bit is set. The empty stream counts as all ones.
    pub fn is_all_ones(&self) -> bool {
        self.bits.iter().all(|b| b.is_one())
    }

    pub fn to_natural(&self) -> Result<BigUint, BitStreamError> {
        if !self.is_clean() {
            return Err(BitStreamError::Dirty(self.to_string()));
        }
        Ok(self.raw_natural())
    }

    /// Value of the stored bits, ignoring the terminal. For a dirty stream
    /// this is the wrapped register content.
    pub fn raw_natural(&self) -> BigUint {
        let mut n = BigUint::zero();
        for (i, b) in self.bits.iter().enumerate() {
            if b.is_one() {
                n.set_bit(i as u64, true);
            }
        }
        n
    }

    /// Minimal-length clean stream for `n`; `from_natural(0)` is `[]o`.
    pub fn from_natural(n: &BigUint) -> Self {
        let len = n.bits();
        Self::clean((0..len).map(|i| Bit::from_bool(n.bit(i))).collect())
    }

    pub fn from_u64(n: u64) -> Self {
        Self::from_natural(&BigUint::from(n))
    }

    /// Non-limiting addition. The result has `max(len) + 1` bits when the
    /// final carry is set, `max(len)` otherwise.
    pub fn add_unbounded(&self, other: &BitStream) -> BitStream {
        BitStream::new(
            ripple_add(&self.bits, &other.bits),
            self.terminal.join(other.terminal),
        )
    }

    /// Limiting addition: wraps modulo `2^max_len` and marks dirty when the
    /// exact sum does not fit in `max_len` bits.
    pub fn add_limited(&self, other: &BitStream, max_len: usize) -> BitStream {
        self.add_unbounded(other).limit(max_len)
    }

    /// Non-limiting shift-and-add multiplication; the result is
    /// minimal-length (no high zero bits).
    pub fn mul_unbounded(&self, other: &BitStream) -> BitStream {
        BitStream::new(
            shift_add_mul(&self.bits, &other.bits),
            self.terminal.join(other.terminal),
        )
    }

    pub fn mul_limited(&self, other: &BitStream, max_len: usize) -> BitStream {
        self.mul_unbounded(other).limit(max_len)
    }

    /// Bits `start .. start + count`, zero-padded past the end, terminal kept.
    pub fn slice(&self, start: usize, count: usize) -> BitStream {
        let bits = (start..start + count)
            .map(|i| self.bits.get(i).copied().unwrap_or(Bit::Zero))
            .collect();
        BitStream::new(bits, self.terminal)
    }

    /// The first `n` bits; same as `slice(0, n)`.
    pub fn truncate(&self, n: usize) -> BitStream {
        self.slice(0, n)
    }

    /// `self` as the low part followed by `high`; value `self + high * 2^len(self)`.
    pub fn concat(&self, high: &BitStream) -> BitStream {
        let mut bits = Vec::with_capacity(self.len() + high.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&high.bits);
        BitStream::new(bits, self.terminal.join(high.terminal))
    }

    /// Compares the stored bit patterns as naturals, ignoring terminals.
    pub fn cmp_bits(&self, other: &BitStream) -> Ordering {
        let n = self.len().max(other.len());
        for i in (0..n).rev() {
            let a = self.bits.get(i).is_some_and(|b| b.is_one());
            let b = other.bits.get(i).is_some_and(|b| b.is_one());
            match (a, b) {
                (true, false) => return Ordering::Greater,
                (false, true) => return Ordering::Less,
                _ => {}
            }
        }
        Ordering::Equal
    }

    /// Ripple-borrow subtraction `self - other`, `None` when `other` is
    /// larger. The result has `max(len)` bits.
    pub fn checked_sub(&self, other: &BitStream) -> Option<BitStream> {
        if self.cmp_bits(other) == Ordering::Less {
            return None;
        }
        let n = self.len().max(other.len());
        let mut out = Vec::with_capacity(n);
        let mut borrow = false;
        for i in 0..n {
            let a = self.bits.get(i).is_some_and(|b| b.is_one());
            let b = other.bits.get(i).is_some_and(|b| b.is_one());
            let d = a ^ b ^ borrow;
            borrow = (!a && (b || borrow)) || (a && b && borrow);
            out.push(Bit::from_bool(d));
        }
        debug_assert!(!borrow);
        Some(BitStream::new(out, self.terminal.join(other.terminal)))
    }

    fn limit(mut self, max_len: usize) -> BitStream {
        if self.bits.len() > max_len {
            let overflow = self.bits[max_len..].iter().any(|b| b.is_one());
            self.bits.truncate(max_len);
            if overflow {
                self.terminal = Terminal::Overflow;
            }
        }
        self
    }
}

fn ripple_add(a: &[Bit], b: &[Bit]) -> Vec<Bit> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n + 1);
    let mut carry = false;
    for i in 0..n {
        let x = a.get(i).is_some_and(|b| b.is_one());
        let y = b.get(i).is_some_and(|b| b.is_one());
        out.push(Bit::from_bool(x ^ y ^ carry));
        carry = (x && y) || (carry && (x ^ y));
    }
    if carry {
        out.push(Bit::One);
    }
    out
}

fn shift_add_mul(a: &[Bit], b: &[Bit]) -> Vec<Bit> {
    let mut acc = vec![false; a.len() + b.len()];
    for (shift, bb) in b.iter().enumerate() {
        if !bb.is_one() {
            continue;
        }
        // acc += a << shift
        let mut carry = false;
        let mut i = 0;
        while i < a.len() || carry {
            let x = acc[shift + i];
            let y = a.get(i).is_some_and(|b| b.is_one());
            acc[shift + i] = x ^ y ^ carry;
            carry = (x && y) || (carry && (x ^ y));
            i += 1;
        }
    }
    while acc.last() == Some(&false) {
        acc.pop();
    }
    acc.into_iter().map(Bit::from_bool).collect()
}

/// LSB-first bits followed by `o` (clean) or `X` (overflow), e.g. `101o`.
impl fmt::Display for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if b.is_one() { "1" } else { "0" })?;
        }
        f.write_str(match self.terminal {
            Terminal::Clean => "o",
            Terminal::Overflow => "X",
        })
    }
}

impl fmt::Debug for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitStream({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(bits: &[u8], clean: bool) -> BitStream {
        BitStream::from_bools(
            bits.iter().map(|&b| b == 1),
            if clean { Terminal::Clean } else { Terminal::Overflow },
        )
    }

    fn nat(v: &BitStream) -> u64 {
        v.to_natural().unwrap().try_into().unwrap()
    }

    #[test]
    fn length_counts_bits_only() {
        assert_eq!(BitStream::empty().len(), 0);
        assert_eq!(s(&[1, 1], true).len(), 2);
        assert_eq!(s(&[0, 0, 0, 1], false).len(), 4);
    }

    #[test]
    fn cleanliness() {
        assert!(s(&[1], true).is_clean());
        assert!(!s(&[1], false).is_clean());
        assert!(!s(&[], false).is_clean());
    }

    #[test]
    fn natural_conversions() {
        assert_eq!(nat(&BitStream::empty()), 0);
        assert_eq!(nat(&s(&[1, 1], true)), 3);
        assert_eq!(nat(&s(&[0, 0, 1], true)), 4);
        assert_eq!(BitStream::from_u64(0), BitStream::empty());
        assert_eq!(BitStream::from_u64(5), s(&[1, 0, 1], true));
        assert_eq!(BitStream::from_u64(8), s(&[0, 0, 0, 1], true));
        let err = s(&[1], false).to_natural().unwrap_err();
        assert!(err.to_string().contains("overflow-tainted"));
    }

    #[test]
    fn unbounded_addition() {
        assert_eq!(s(&[1, 1], true).add_unbounded(&s(&[1], true)), s(&[0, 0, 1], true));
        let v = s(&[1, 0, 1, 0], true);
        assert_eq!(v.add_unbounded(&BitStream::empty()), v);
        assert!(!s(&[1], false).add_unbounded(&s(&[1], true)).is_clean());
    }

    #[test]
    fn limited_addition_wraps_and_marks() {
        assert_eq!(s(&[1, 1], true).add_limited(&s(&[1], true), 2), s(&[0, 0], false));
        assert_eq!(s(&[1], true).add_limited(&s(&[0, 1], true), 3), s(&[1, 1], true));
        assert_eq!(
            BitStream::empty().add_limited(&BitStream::empty(), 0),
            BitStream::empty()
        );
    }

    #[test]
    fn multiplication() {
        assert_eq!(s(&[1, 1], true).mul_unbounded(&s(&[0, 1], true)), s(&[0, 1, 1], true));
        assert_eq!(s(&[1, 0, 1], true).mul_unbounded(&BitStream::empty()), BitStream::empty());
        let v = s(&[1, 0, 1, 1], true);
        assert_eq!(nat(&s(&[1], true).mul_unbounded(&v)), nat(&v));
        assert_eq!(s(&[0, 1], true).mul_limited(&s(&[0, 1], true), 2), s(&[0, 0], false));
        assert_eq!(s(&[1], true).mul_limited(&s(&[1], true), 1), s(&[1], true));
        assert_eq!(s(&[1, 1], true).mul_limited(&s(&[1], true), 2), s(&[1, 1], true));
    }

    #[test]
    fn slicing() {
        assert_eq!(s(&[1, 0, 1, 1], true).slice(2, 2), s(&[1, 1], true));
        let v = s(&[1, 0, 1, 1], true);
        assert_eq!(v.slice(0, v.len()), v);
        assert_eq!(s(&[1], true).slice(3, 2), s(&[0, 0], true));
        assert_eq!(s(&[1, 0, 1], true).truncate(2), s(&[1, 0], true));
        assert_eq!(s(&[1, 0, 1], false).truncate(0), s(&[], false));
        assert_eq!(s(&[1, 1], false).truncate(1), s(&[1], false));
    }

    #[test]
    fn subtraction_and_comparison() {
        let a = BitStream::from_u64(13);
        let b = BitStream::from_u64(6);
        assert_eq!(a.cmp_bits(&b), Ordering::Greater);
        assert_eq!(nat(&a.checked_sub(&b).unwrap()), 7);
        assert!(b.checked_sub(&a).is_none());
        assert_eq!(s(&[1, 0, 0], true).cmp_bits(&s(&[1], true)), Ordering::Equal);
    }

    #[test]
    fn display() {
        assert_eq!(s(&[1, 0, 1], true).to_string(), "101o");
        assert_eq!(s(&[0, 1], false).to_string(), "01X");
    }

    fn arb_stream() -> impl Strategy<Value = BitStream> {
        (prop::collection::vec(any::<bool>(), 0..24), any::<bool>()).prop_map(|(b, clean)| {
            BitStream::from_bools(b, if clean { Terminal::Clean } else { Terminal::Overflow })
        })
    }

    proptest! {
        #[test]
        fn limited_ops_match_modular_oracle(a in 0u64..1 << 20, b in 0u64..1 << 20, l in 0usize..24) {
            let (va, vb) = (BitStream::from_u64(a), BitStream::from_u64(b));
            let modulus = 1u128 << l;
            for (r, exact) in [
                (va.add_limited(&vb, l), a as u128 + b as u128),
                (va.mul_limited(&vb, l), a as u128 * b as u128),
            ] {
                let bits: u128 = r.raw_natural().try_into().unwrap();
                prop_assert_eq!(bits, exact % modulus);
                prop_assert_eq!(r.is_clean(), exact < modulus);
                prop_assert!(r.len() <= l);
            }
        }

        #[test]
        fn taint_is_monotone(a in arb_stream(), b in arb_stream(), l in 0usize..30, st in 0usize..30, n in 0usize..30) {
            let dirty = !a.is_clean() || !b.is_clean();
            if dirty {
                prop_assert!(!a.add_unbounded(&b).is_clean());
                prop_assert!(!a.add_limited(&b, l).is_clean());
                prop_assert!(!a.mul_unbounded(&b).is_clean());
                prop_assert!(!a.mul_limited(&b, l).is_clean());
                prop_assert!(!a.concat(&b).is_clean());
            }
            prop_assert_eq!(a.slice(st, n).is_clean(), a.is_clean());
            prop_assert_eq!(a.slice(st, n).len(), n);
            prop_assert_eq!(a.truncate(n).len(), n);
            prop_assert_eq!(a.truncate(n), a.slice(0, n));
        }

        #[test]
        fn natural_roundtrip(n in any::<u64>()) {
            let v = BitStream::from_u64(n);
            prop_assert_eq!(nat(&v), n);
            prop_assert_eq!(BitStream::from_natural(&v.to_natural().unwrap()), v);
        }
    }
}
