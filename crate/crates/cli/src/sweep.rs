//! Seeded random comparison of the interval and exhaustive certifiers.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use fxguard_core::analysis::{certify, CertificationMethod, Implementation, Op, SequencedAlgorithm};
use fxguard_core::rational::Rational;
use fxguard_core::FixedPointSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossCheck {
    pub seed: u64,
    pub cases: usize,
    pub agree: usize,
    pub interval_reliable: usize,
    pub exhaustive_reliable: usize,
    /// Interval says reliable while exhaustive search finds an overflow.
    pub violations: usize,
}

impl CrossCheck {
    pub fn to_json(&self) -> Value {
        json!({
            "seed": self.seed,
            "cases": self.cases,
            "agree": self.agree,
            "interval_reliable": self.interval_reliable,
            "exhaustive_reliable": self.exhaustive_reliable,
            "violations": self.violations,
        })
    }
}

impl fmt::Display for CrossCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cross-check (seed {}): {} cases, {} agree, interval-reliable {}, exhaustive-reliable {}, violations {}",
            self.seed, self.cases, self.agree, self.interval_reliable, self.exhaustive_reliable, self.violations
        )
    }
}

fn random_case(rng: &mut ChaCha8Rng, max_bits: u32) -> Implementation {
    let max_bits = max_bits.max(2);
    let p = rng.gen_range(1..max_bits);
    let q = rng.gen_range(1..=max_bits - p);
    let spec = FixedPointSpec::new(p, q).expect("positive widths");
    let units = (1i64 << (p + q)) - 1;
    let grid = |u: i64| Rational::new(u.into(), (1i64 << p).into());
    let steps: Vec<(Op, Rational)> = (0..rng.gen_range(1..=5))
        .map(|_| {
            let op = [Op::Add, Op::Sub, Op::Mul][rng.gen_range(0..3)];
            let limit = (units >> rng.gen_range(0..p + q)).max(1);
            let mut u = rng.gen_range(-limit..=limit);
            if op == Op::Mul && u == 0 {
                u = 1;
            }
            (op, grid(u))
        })
        .collect();
    let alg = SequencedAlgorithm::with_constants(spec, steps).expect("grid constants");
    let lo = rng.gen_range(-units..=units);
    let span = (units >> rng.gen_range(0..p + q)).max(0);
    let hi = (lo + rng.gen_range(0..=span)).min(units);
    Implementation::from_bounds(&grid(lo), &grid(hi), alg).expect("ordered grid bounds")
}

pub fn cross_check(seed: u64, cases: usize, max_bits: u32, exhaustive_limit: u32) -> CrossCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_bits = max_bits.min(exhaustive_limit);
    let imps: Vec<_> = (0..cases).map(|_| random_case(&mut rng, max_bits)).collect();
    let verdicts: Vec<(bool, bool)> = imps
        .par_iter()
        .map(|imp| {
            let i = certify(imp, CertificationMethod::Interval, exhaustive_limit).expect("interval mode");
            let e = certify(imp, CertificationMethod::Exhaustive, exhaustive_limit).expect("within guard");
            (i.is_reliable(), e.is_reliable())
        })
        .collect();
    CrossCheck {
        seed,
        cases,
        agree: verdicts.iter().filter(|(i, e)| i == e).count(),
        interval_reliable: verdicts.iter().filter(|v| v.0).count(),
        exhaustive_reliable: verdicts.iter().filter(|v| v.1).count(),
        violations: verdicts.iter().filter(|(i, e)| *i && !*e).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_sweep_is_reproducible_and_conservative() {
        let a = cross_check(7, 100, 10, 20);
        assert_eq!(a, cross_check(7, 100, 10, 20));
        assert_eq!(a.violations, 0);
        assert_eq!(a.cases, 100);
    }
}
