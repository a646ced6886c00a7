//! Sequenced algorithms, reliable domains and implementation certificates.
//!
//! A [`SequencedAlgorithm`] is an ordered list of binary steps `x ← x ∘ γ`
//! applied to the input `w`, where `∘` is `+`, `-` or `·` and the second
//! operand is either a representable constant or the input itself (the
//! latter is what makes Horner-form polynomials expressible).
//!
//! [`reliable_domain`] computes an input interval `[w_min, w_max]` on which
//! the bit-level evaluation never overflows. For constant-only algorithms it
//! propagates the requirement "every intermediate lies in `[-M, M]`"
//! backwards through the inverse steps; each preimage is snapped inward to
//! the `2^-p` grid, which keeps the result sound under truncating
//! multiplication. Algorithms that reuse the input are handled by a forward
//! interval enclosure and a binary search for the widest safe interval
//! around zero.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::fixedpoint::{FixedPointError, FixedPointSpec, SignedFixedPoint};
use crate::rational::{ceil_to_grid, floor_to_grid, format_rational, Rational};

/// Default `p + q` limit for exhaustive certification.
pub const DEFAULT_EXHAUSTIVE_BITS: u32 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("algorithm has no steps")]
    EmptyAlgorithm,
    #[error("step {index}: multiplication by zero is not allowed")]
    ZeroMultiplier { index: usize },
    #[error("step {index}: constant {value} is not representable under {spec}")]
    UnrepresentableConstant { index: usize, value: String, spec: String },
    #[error("no reliable domain exists for this spec")]
    NoReliableDomain,
    #[error("exhaustive certification needs p + q <= {limit}, got {bits}")]
    ExhaustiveGuard { bits: u32, limit: u32 },
    #[error("invalid implementation: {0}")]
    InvalidImplementation(String),
    #[error(transparent)]
    FixedPoint(#[from] FixedPointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Constant(Rational),
    /// The algorithm's input `w`.
    Input,
}

#[derive(Debug, Clone)]
pub struct Step {
    index: usize,
    op: Op,
    operand: Operand,
    encoded: Option<SignedFixedPoint>,
}

impl Step {
    /// Position in execution order, starting at 1.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn op(&self) -> Op {
        self.op
    }

    pub fn operand(&self) -> &Operand {
        &self.operand
    }

    pub fn constant(&self) -> Option<&Rational> {
        match &self.operand {
            Operand::Constant(c) => Some(c),
            Operand::Input => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequencedAlgorithm {
    spec: FixedPointSpec,
    steps: Vec<Step>,
}

impl SequencedAlgorithm {
    pub fn new<I>(spec: FixedPointSpec, steps: I) -> Result<Self, AnalysisError>
    where
        I: IntoIterator<Item = (Op, Operand)>,
    {
        let mut out = Vec::new();
        for (i, (op, operand)) in steps.into_iter().enumerate() {
            let index = i + 1;
            let encoded = match &operand {
                Operand::Constant(c) => {
                    if op == Op::Mul && c.is_zero() {
                        return Err(AnalysisError::ZeroMultiplier { index });
                    }
                    if !spec.is_representable(c) {
                        return Err(AnalysisError::UnrepresentableConstant {
                            index,
                            value: format_rational(c),
                            spec: spec.to_string(),
                        });
                    }
                    Some(SignedFixedPoint::encode(c, spec)?)
                }
                Operand::Input => None,
            };
            out.push(Step { index, op, operand, encoded });
        }
        Ok(Self { spec, steps: out })
    }

    /// Shorthand for algorithms whose steps all take constants.
    pub fn with_constants<I>(spec: FixedPointSpec, steps: I) -> Result<Self, AnalysisError>
    where
        I: IntoIterator<Item = (Op, Rational)>,
    {
        Self::new(spec, steps.into_iter().map(|(op, c)| (op, Operand::Constant(c))))
    }

    /// Horner evaluation of `c_0 + c_1 w + ... + c_n w^n` (`coeffs[i] = c_i`,
    /// `n >= 1`, `c_n != 0`): `·c_n, +c_{n-1}, ·w, +c_{n-2}, ..., ·w, +c_0`.
    pub fn horner(spec: FixedPointSpec, coeffs: &[Rational]) -> Result<Self, AnalysisError> {
        let n = coeffs.len().checked_sub(1).filter(|&n| n >= 1).ok_or(AnalysisError::EmptyAlgorithm)?;
        let mut steps = vec![
            (Op::Mul, Operand::Constant(coeffs[n].clone())),
            (Op::Add, Operand::Constant(coeffs[n - 1].clone())),
        ];
        for c in coeffs[..n - 1].iter().rev() {
            steps.push((Op::Mul, Operand::Input));
            steps.push((Op::Add, Operand::Constant(c.clone())));
        }
        Self::new(spec, steps)
    }

    pub fn spec(&self) -> FixedPointSpec {
        self.spec
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn uses_input(&self) -> bool {
        self.steps.iter().any(|s| s.operand == Operand::Input)
    }

    /// Largest constant magnitude, `γ_m`.
    pub fn max_constant(&self) -> Rational {
        self.steps
            .iter()
            .filter_map(|s| s.constant())
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Ideal rational evaluation, no rounding and no overflow.
    pub fn eval_exact(&self, a: &Rational) -> Rational {
        self.steps.iter().fold(a.clone(), |x, s| {
            let rhs = s.constant().unwrap_or(a);
            match s.op {
                Op::Add => x + rhs,
                Op::Sub => x - rhs,
                Op::Mul => x * rhs,
            }
        })
    }

    /// Bit-level evaluation. Dirty iff some intermediate overflowed.
    pub fn eval_fixed(&self, w: &SignedFixedPoint) -> SignedFixedPoint {
        self.steps
            .iter()
            .fold(w.clone(), |x, s| self.apply_fixed(s, &x, w))
    }

    /// Every intermediate of [`eval_fixed`](Self::eval_fixed), one per step.
    pub fn eval_fixed_trace(&self, w: &SignedFixedPoint) -> Vec<SignedFixedPoint> {
        let mut x = w.clone();
        self.steps
            .iter()
            .map(|s| {
                x = self.apply_fixed(s, &x, w);
                x.clone()
            })
            .collect()
    }

    fn apply_fixed(&self, s: &Step, x: &SignedFixedPoint, w: &SignedFixedPoint) -> SignedFixedPoint {
        let rhs = s.encoded.as_ref().unwrap_or(w);
        match s.op {
            Op::Add => x.add(rhs, self.spec),
            Op::Sub => x.sub(rhs, self.spec),
            Op::Mul => x.times(rhs, self.spec),
        }
    }

    /// Exact and fixed-semantics enclosure of every intermediate for inputs
    /// in `[lo, hi]`. `None` as soon as some intermediate may leave `[-M, M]`.
    fn enclosure(&self, lo: &Rational, hi: &Rational) -> Option<(Rational, Rational)> {
        let m = self.spec.max_magnitude();
        let step = self.spec.step();
        let inside = |l: &Rational, h: &Rational| *l >= -m.clone() && *h <= m;
        if !inside(lo, hi) {
            return None;
        }
        let (mut xl, mut xh) = (lo.clone(), hi.clone());
        for s in &self.steps {
            let (rl, rh) = match &s.operand {
                Operand::Constant(c) => (c.clone(), c.clone()),
                Operand::Input => (lo.clone(), hi.clone()),
            };
            let (l, h) = match s.op {
                Op::Add => (&xl + &rl, &xh + &rh),
                Op::Sub => (&xl - &rh, &xh - &rl),
                Op::Mul => {
                    let c = [&xl * &rl, &xl * &rh, &xh * &rl, &xh * &rh];
                    let l = c.iter().min().cloned().expect("four corners");
                    let h = c.iter().max().cloned().expect("four corners");
                    (l, h)
                }
            };
            if !inside(&l, &h) {
                return None;
            }
            if s.op == Op::Mul {
                let tl = toward_zero(&l, &step);
                let th = toward_zero(&h, &step);
                xl = l.min(tl);
                xh = h.max(th);
            } else {
                xl = l;
                xh = h;
            }
        }
        Some((xl, xh))
    }
}

fn toward_zero(v: &Rational, step: &Rational) -> Rational {
    if v.is_negative() {
        ceil_to_grid(v, step)
    } else {
        floor_to_grid(v, step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMethod {
    BackwardPropagation,
    ForwardEnclosure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliableDomain {
    pub w_min: Rational,
    pub w_max: Rational,
    pub gamma_min: Rational,
    pub gamma_max: Rational,
    /// Intermediate bound used for the propagation, `M = 2^q - 2^-p`.
    pub bound: Rational,
    /// The same backward propagation with the looser `2^q` bound and no grid
    /// snapping, when it is non-empty. Only computed for constant-only
    /// algorithms.
    pub envelope: Option<(Rational, Rational)>,
    pub method: DomainMethod,
}

impl ReliableDomain {
    pub fn contains(&self, a: &Rational) -> bool {
        *a >= self.w_min && *a <= self.w_max
    }
}

pub fn reliable_domain(alg: &SequencedAlgorithm) -> Result<ReliableDomain, AnalysisError> {
    if alg.is_empty() {
        return Err(AnalysisError::EmptyAlgorithm);
    }
    if alg.uses_input() {
        enclosure_domain(alg)
    } else {
        backward_domain(alg)
    }
}

/// Inverts one constant step on the interval `[lo, hi]`, optionally
/// snapping the preimage inward to `step`.
fn invert_step(
    s: &Step,
    lo: &Rational,
    hi: &Rational,
    step: Option<&Rational>,
) -> (Rational, Rational) {
    let c = s.constant().expect("constant-only algorithm");
    let snap = |l: Rational, h: Rational| match step {
        Some(g) => (ceil_to_grid(&l, g), floor_to_grid(&h, g)),
        None => (l, h),
    };
    match s.op {
        Op::Add => (lo - c, hi - c),
        Op::Sub => (lo + c, hi + c),
        Op::Mul if c.is_positive() => snap(lo / c, hi / c),
        Op::Mul => snap(hi / c, lo / c),
    }
}

fn backward_pass(
    alg: &SequencedAlgorithm,
    bound: &Rational,
    step: Option<&Rational>,
) -> Option<(Rational, Rational)> {
    let (mut lo, mut hi) = (-bound.clone(), bound.clone());
    for s in alg.steps.iter().rev() {
        let (l, h) = invert_step(s, &lo, &hi, step);
        lo = l.max(-bound.clone());
        hi = h.min(bound.clone());
        if lo > hi {
            return None;
        }
    }
    Some((lo, hi))
}

fn backward_domain(alg: &SequencedAlgorithm) -> Result<ReliableDomain, AnalysisError> {
    let spec = alg.spec;
    let bound = spec.max_magnitude();
    let (w_min, w_max) =
        backward_pass(alg, &bound, Some(&spec.step())).ok_or(AnalysisError::NoReliableDomain)?;
    // every step is affine and monotone, so the image of an interval is the
    // interval spanned by the endpoint images
    let g1 = alg.eval_exact(&w_min);
    let g2 = alg.eval_exact(&w_max);
    let (gamma_min, gamma_max) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
    Ok(ReliableDomain {
        w_min,
        w_max,
        gamma_min,
        gamma_max,
        bound,
        envelope: backward_pass(alg, &spec.envelope(), None),
        method: DomainMethod::BackwardPropagation,
    })
}

fn enclosure_domain(alg: &SequencedAlgorithm) -> Result<ReliableDomain, AnalysisError> {
    let spec = alg.spec;
    let step = spec.step();
    let zero = Rational::zero();
    let at_zero = alg.enclosure(&zero, &zero).ok_or(AnalysisError::NoReliableDomain)?;
    let max_units: BigInt = BigInt::from(spec.max_units());

    // largest u in [0, max_units] such that `probe(u)` holds; probe is
    // monotone because interval enclosures grow with their input
    let search = |probe: &dyn Fn(&Rational) -> bool| {
        let (mut good, mut bad): (BigInt, BigInt) = (BigInt::zero(), &max_units + 1u32);
        while &bad - &good > BigInt::one() {
            let mid: BigInt = (&good + &bad).div_floor(&BigInt::from(2));
            if probe(&(Rational::from_integer(mid.clone()) * &step)) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Rational::from_integer(good) * &step
    };
    let w_max = search(&|t| alg.enclosure(&zero, t).is_some());
    let w_min = -search(&|t| alg.enclosure(&-t.clone(), &zero).is_some());

    let upper = alg.enclosure(&zero, &w_max).unwrap_or_else(|| at_zero.clone());
    let lower = alg.enclosure(&w_min, &zero).unwrap_or(at_zero);
    Ok(ReliableDomain {
        w_min,
        w_max,
        gamma_min: upper.0.min(lower.0),
        gamma_max: upper.1.max(lower.1),
        bound: spec.max_magnitude(),
        envelope: None,
        method: DomainMethod::ForwardEnclosure,
    })
}

/// Declared input bounds paired with an algorithm.
#[derive(Debug, Clone)]
pub struct Implementation {
    lower: SignedFixedPoint,
    upper: SignedFixedPoint,
    algorithm: SequencedAlgorithm,
}

impl Implementation {
    pub fn new(
        lower: SignedFixedPoint,
        upper: SignedFixedPoint,
        algorithm: SequencedAlgorithm,
    ) -> Result<Self, AnalysisError> {
        let spec = algorithm.spec();
        if !lower.conforms_to(spec) || !upper.conforms_to(spec) {
            return Err(AnalysisError::InvalidImplementation(format!(
                "bounds do not conform to {spec}"
            )));
        }
        if !lower.leq(&upper).map_err(|e| AnalysisError::InvalidImplementation(e.to_string()))? {
            return Err(AnalysisError::InvalidImplementation(format!(
                "lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(Self { lower, upper, algorithm })
    }

    /// Encodes rational bounds; both must be representable.
    pub fn from_bounds(
        lower: &Rational,
        upper: &Rational,
        algorithm: SequencedAlgorithm,
    ) -> Result<Self, AnalysisError> {
        let spec = algorithm.spec();
        for b in [lower, upper] {
            if !spec.is_representable(b) {
                return Err(AnalysisError::InvalidImplementation(format!(
                    "bound {} is not representable under {spec}",
                    format_rational(b)
                )));
            }
        }
        Self::new(
            SignedFixedPoint::encode(lower, spec)?,
            SignedFixedPoint::encode(upper, spec)?,
            algorithm,
        )
    }

    pub fn lower(&self) -> &SignedFixedPoint {
        &self.lower
    }

    pub fn upper(&self) -> &SignedFixedPoint {
        &self.upper
    }

    pub fn algorithm(&self) -> &SequencedAlgorithm {
        &self.algorithm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificationMethod {
    Interval,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reliable,
    NotReliable,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub implementation: Implementation,
    pub domain: Option<ReliableDomain>,
    pub verdict: Verdict,
    /// Smallest input found whose bit-level evaluation is dirty.
    pub witness: Option<Rational>,
    pub method: CertificationMethod,
}

impl Certificate {
    pub fn is_reliable(&self) -> bool {
        self.verdict == Verdict::Reliable
    }

    /// Structured form with every rational as an exact `"num/den"` string.
    pub fn to_json(&self, tool_version: &str) -> serde_json::Value {
        let alg = self.implementation.algorithm();
        let steps: Vec<_> = alg
            .steps()
            .iter()
            .map(|s| {
                json!({
                    "index": s.index(),
                    "op": s.op(),
                    "operand": match s.operand() {
                        Operand::Constant(c) => format_rational(c),
                        Operand::Input => "input".to_string(),
                    },
                })
            })
            .collect();
        let lower = self.implementation.lower().decode_wrapped();
        let upper = self.implementation.upper().decode_wrapped();
        json!({
            "spec": alg.spec(),
            "algorithm": steps,
            "implementation": {
                "lower": format_rational(&lower),
                "upper": format_rational(&upper),
            },
            "d_r": self.domain.as_ref().map(|d| json!({
                "w_min": format_rational(&d.w_min),
                "w_max": format_rational(&d.w_max),
            })),
            "gamma_bounds": self.domain.as_ref().map(|d| json!({
                "min": format_rational(&d.gamma_min),
                "max": format_rational(&d.gamma_max),
            })),
            "verdict": self.verdict,
            "witness": self.witness.as_ref().map(format_rational),
            "method": self.method,
            "tool_version": tool_version,
        })
    }
}

/// Checks an implementation against its algorithm.
///
/// `Interval` compares the declared bounds with [`reliable_domain`];
/// `Exhaustive` evaluates every representable input in the bounds and
/// reports the smallest dirty one. Exhaustive mode refuses specs wider than
/// `exhaustive_bits`.
pub fn certify(
    imp: &Implementation,
    method: CertificationMethod,
    exhaustive_bits: u32,
) -> Result<Certificate, AnalysisError> {
    let alg = imp.algorithm();
    let spec = alg.spec();
    let domain = match reliable_domain(alg) {
        Ok(d) => Some(d),
        Err(AnalysisError::NoReliableDomain | AnalysisError::EmptyAlgorithm) => None,
        Err(e) => return Err(e),
    };
    let lower = imp.lower().decode()?;
    let upper = imp.upper().decode()?;
    let dirty_at = |units: &BigInt| {
        let w = SignedFixedPoint::from_units(units, spec).expect("inside the implementation bounds");
        !alg.eval_fixed(&w).is_clean()
    };
    let to_units = |a: &Rational| (a / spec.step()).to_integer();

    let (verdict, witness) = match method {
        CertificationMethod::Interval => {
            let inside = match (&domain, alg.is_empty()) {
                (_, true) => true,
                (Some(d), _) => d.contains(&lower) && d.contains(&upper),
                (None, _) => false,
            };
            if inside {
                (Verdict::Reliable, None)
            } else {
                // cheap witness candidates: the declared bounds and the grid
                // points just outside the computed domain
                let mut candidates = vec![lower.clone(), upper.clone()];
                if let Some(d) = &domain {
                    candidates.push(&d.w_min - spec.step());
                    candidates.push(&d.w_max + spec.step());
                }
                candidates.retain(|c| *c >= lower && *c <= upper);
                candidates.sort();
                let witness = candidates.into_iter().find(|c| dirty_at(&to_units(c)));
                (Verdict::NotReliable, witness)
            }
        }
        CertificationMethod::Exhaustive => {
            if spec.word_bits() > exhaustive_bits || spec.word_bits() > 62 {
                return Err(AnalysisError::ExhaustiveGuard {
                    bits: spec.word_bits(),
                    limit: exhaustive_bits.min(62),
                });
            }
            let lo: i64 = to_units(&lower).try_into().expect("guarded width");
            let hi: i64 = to_units(&upper).try_into().expect("guarded width");
            let first = (lo..=hi)
                .into_par_iter()
                .find_first(|u| dirty_at(&BigInt::from(*u)));
            match first {
                None => (Verdict::Reliable, None),
                Some(u) => (
                    Verdict::NotReliable,
                    Some(Rational::from_integer(BigInt::from(u)) * spec.step()),
                ),
            }
        }
    };
    Ok(Certificate {
        implementation: imp.clone(),
        domain,
        verdict,
        witness,
        method,
    })
}

/// Error bound for evaluating a degree-`n` polynomial with largest
/// coefficient magnitude `gamma_m` at `a`:
///
/// `(n² + n)/2 · (δc |a|^n + (γm + δc) Σ_{k=1..n} C(n,k) |a|^(n-k) δc^k + δt)`
///
/// with conversion error `δc = 2^-(p+1)` and summation error `δt = 2·2^-p`.
/// For `n = 0` this is floored at `δc`.
pub fn polynomial_error_bound(n: u32, gamma_m: &Rational, a: &Rational, spec: FixedPointSpec) -> Rational {
    let delta = spec.step();
    let dc = &delta / Rational::from_integer(BigInt::from(2));
    let dt = &delta * Rational::from_integer(BigInt::from(2));
    let a = a.abs();
    let n_big = BigInt::from(n);

    let mut sum = Rational::zero();
    let mut binom = BigInt::one();
    for k in 1..=n {
        binom = binom * BigInt::from(n - k + 1) / BigInt::from(k);
        sum += Rational::from_integer(binom.clone()) * pow(&a, n - k) * pow(&dc, k);
    }
    let factor = Rational::new(&n_big * &n_big + &n_big, BigInt::from(2));
    let inner = &dc * pow(&a, n) + (gamma_m.abs() + &dc) * sum + dt;
    let bound = factor * inner;
    if bound < dc {
        dc
    } else {
        bound
    }
}

fn pow(r: &Rational, e: u32) -> Rational {
    num_traits::pow(r.clone(), e as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn spec(p: u32, q: u32) -> FixedPointSpec {
        FixedPointSpec::new(p, q).unwrap()
    }

    fn alg(s: FixedPointSpec, steps: &[(Op, Rational)]) -> SequencedAlgorithm {
        SequencedAlgorithm::with_constants(s, steps.iter().cloned()).unwrap()
    }

    fn enc(a: Rational, s: FixedPointSpec) -> SignedFixedPoint {
        SignedFixedPoint::encode(&a, s).unwrap()
    }

    /// Grid hull of inputs whose bit-level evaluation stays clean.
    fn clean_hull(a: &SequencedAlgorithm) -> Option<(Rational, Rational)> {
        let clean: Vec<_> = a
            .spec()
            .enumerate_values()
            .unwrap()
            .into_iter()
            .filter(|w| a.eval_fixed(w).is_clean())
            .map(|w| w.decode().unwrap())
            .collect();
        Some((clean.first()?.clone(), clean.last()?.clone()))
    }

    #[test]
    fn construction_checks() {
        let s = spec(2, 3);
        assert_eq!(
            SequencedAlgorithm::with_constants(s, [(Op::Mul, int(0))]).unwrap_err(),
            AnalysisError::ZeroMultiplier { index: 1 }
        );
        assert!(matches!(
            SequencedAlgorithm::with_constants(s, [(Op::Add, ratio(1, 3))]),
            Err(AnalysisError::UnrepresentableConstant { index: 1, .. })
        ));
        assert!(matches!(
            SequencedAlgorithm::with_constants(s, [(Op::Add, int(1)), (Op::Add, int(8))]),
            Err(AnalysisError::UnrepresentableConstant { index: 2, .. })
        ));
        let a = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        assert_eq!(a.steps()[1].index(), 2);
    }

    #[test]
    fn exact_evaluation() {
        let s = spec(2, 3);
        assert_eq!(alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]).eval_exact(&int(3)), int(7));
        assert_eq!(alg(s, &[]).eval_exact(&ratio(5, 3)), ratio(5, 3));
        assert_eq!(alg(s, &[(Op::Add, int(0))]).eval_exact(&ratio(5, 3)), ratio(5, 3));
    }

    #[test]
    fn fixed_evaluation() {
        let s = spec(2, 2);
        let id = alg(s, &[(Op::Mul, int(1)), (Op::Add, int(0))]);
        for w in s.enumerate_values().unwrap() {
            assert_eq!(id.eval_fixed(&w), w);
        }
        let a = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        let trace = a.eval_fixed_trace(&enc(ratio(3, 2), s));
        assert_eq!(trace[0].decode().unwrap(), int(3));
        assert!(!trace[1].is_clean());
        let r = a.eval_fixed(&enc(int(1), s));
        assert!(r.is_clean());
        assert_eq!(r.decode().unwrap(), int(3));
    }

    #[test]
    fn domain_of_affine_pair_matches_exhaustive_hull() {
        let s = spec(2, 3);
        let a = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        let d = reliable_domain(&a).unwrap();
        assert_eq!((d.w_min.clone(), d.w_max.clone()), (ratio(-15, 4), ratio(13, 4)));
        assert_eq!(clean_hull(&a).unwrap(), (d.w_min.clone(), d.w_max.clone()));
        assert_eq!((d.gamma_min, d.gamma_max), (ratio(-13, 2), ratio(15, 2)));
        // with the 2^q envelope and no snapping: [-9/2, 7/2] ∩ [-4, 4]
        assert_eq!(d.envelope, Some((int(-4), ratio(7, 2))));
    }

    #[test]
    fn identity_and_negation_keep_full_domain() {
        let s = spec(3, 3);
        let m = s.max_magnitude();
        for a in [alg(s, &[(Op::Add, int(0))]), alg(s, &[(Op::Mul, int(-1))])] {
            let d = reliable_domain(&a).unwrap();
            assert_eq!((d.w_min, d.w_max), (-m.clone(), m.clone()));
        }
    }

    #[test]
    fn domain_depends_on_step_order() {
        let s = spec(2, 3);
        let ab = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        let ba = alg(s, &[(Op::Add, int(1)), (Op::Mul, int(2))]);
        let d1 = reliable_domain(&ab).unwrap();
        let d2 = reliable_domain(&ba).unwrap();
        assert_ne!((d1.w_min.clone(), d1.w_max.clone()), (d2.w_min.clone(), d2.w_max.clone()));
        assert_eq!(clean_hull(&ba).unwrap(), (d2.w_min, d2.w_max));
    }

    #[test]
    fn empty_domain_is_reported() {
        let s = spec(2, 2);
        let m = s.max_magnitude();
        let a = alg(s, &[(Op::Add, m.clone()), (Op::Add, m.clone()), (Op::Add, m)]);
        assert_eq!(reliable_domain(&a).unwrap_err(), AnalysisError::NoReliableDomain);
        assert_eq!(
            reliable_domain(&alg(s, &[])).unwrap_err(),
            AnalysisError::EmptyAlgorithm
        );
    }

    #[test]
    fn negative_multiplier_swaps_endpoints() {
        let s = spec(2, 3);
        let a = alg(s, &[(Op::Add, int(2)), (Op::Mul, int(-2))]);
        let d = reliable_domain(&a).unwrap();
        assert_eq!(clean_hull(&a).unwrap(), (d.w_min.clone(), d.w_max.clone()));
        assert!(d.gamma_min <= d.gamma_max);
        assert_eq!(d.gamma_min, a.eval_exact(&d.w_max));
    }

    #[test]
    fn horner_domain_is_sound() {
        let s = spec(3, 4);
        let a = SequencedAlgorithm::horner(s, &[int(1), ratio(-3, 2), ratio(5, 8)]).unwrap();
        assert!(a.uses_input());
        let w = enc(int(2), s);
        assert_eq!(a.eval_exact(&int(2)), int(1) - int(3) + ratio(5, 2));
        assert_eq!(a.eval_fixed(&w).decode().unwrap(), ratio(1, 2));
        let d = reliable_domain(&a).unwrap();
        assert_eq!(d.method, DomainMethod::ForwardEnclosure);
        assert!(d.contains(&int(0)));
        for w in s.enumerate_values().unwrap() {
            if d.contains(&w.decode().unwrap()) {
                assert!(a.eval_fixed(&w).is_clean(), "{w}");
            }
        }
    }

    #[test]
    fn certification_modes() {
        let s = spec(2, 3);
        let a = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        let d = reliable_domain(&a).unwrap();
        let imp = Implementation::from_bounds(&d.w_min, &d.w_max, a.clone()).unwrap();
        for m in [CertificationMethod::Interval, CertificationMethod::Exhaustive] {
            let c = certify(&imp, m, DEFAULT_EXHAUSTIVE_BITS).unwrap();
            assert!(c.is_reliable());
            assert!(c.witness.is_none());
        }

        let doubling = alg(s, &[(Op::Mul, int(2))]);
        let m = s.max_magnitude();
        let imp = Implementation::from_bounds(&int(0), &m, doubling).unwrap();
        let c = certify(&imp, CertificationMethod::Exhaustive, DEFAULT_EXHAUSTIVE_BITS).unwrap();
        assert_eq!(c.verdict, Verdict::NotReliable);
        assert_eq!(c.witness, Some(int(4)));
        let c = certify(&imp, CertificationMethod::Interval, DEFAULT_EXHAUSTIVE_BITS).unwrap();
        assert_eq!(c.verdict, Verdict::NotReliable);
        let w = c.witness.expect("boundary neighbour overflows");
        assert!(!imp.algorithm().eval_fixed(&enc(w, s)).is_clean());

        let single = Implementation::from_bounds(&int(1), &int(1), a).unwrap();
        assert!(certify(&single, CertificationMethod::Interval, 20).unwrap().is_reliable());
        assert!(certify(&single, CertificationMethod::Exhaustive, 20).unwrap().is_reliable());
    }

    #[test]
    fn exhaustive_guard() {
        let s = spec(12, 13);
        let a = alg(s, &[(Op::Add, int(1))]);
        let imp = Implementation::from_bounds(&int(0), &int(1), a).unwrap();
        assert_eq!(
            certify(&imp, CertificationMethod::Exhaustive, 20).unwrap_err(),
            AnalysisError::ExhaustiveGuard { bits: 25, limit: 20 }
        );
    }

    #[test]
    fn implementation_validation() {
        let s = spec(2, 3);
        let a = alg(s, &[(Op::Add, int(1))]);
        assert!(Implementation::from_bounds(&int(2), &int(1), a.clone()).is_err());
        assert!(Implementation::from_bounds(&ratio(1, 3), &int(1), a).is_err());
    }

    #[test]
    fn certificate_json_fields() {
        let s = spec(2, 3);
        let a = alg(s, &[(Op::Mul, int(2)), (Op::Add, int(1))]);
        let imp = Implementation::from_bounds(&int(-1), &int(1), a).unwrap();
        let c = certify(&imp, CertificationMethod::Interval, 20).unwrap();
        let v = c.to_json("0.1.0");
        assert_eq!(v["spec"], json!({"p": 2, "q": 3}));
        assert_eq!(v["d_r"]["w_min"], "-15/4");
        assert_eq!(v["verdict"], "reliable");
        assert_eq!(v["method"], "interval");
        assert_eq!(v["algorithm"][0]["op"], "mul");
        assert_eq!(v["algorithm"][1]["operand"], "1/1");
        assert!(v["witness"].is_null());
    }

    #[test]
    fn error_bound_shape() {
        let s = spec(4, 4);
        let dc = ratio(1, 32);
        assert_eq!(polynomial_error_bound(0, &int(3), &int(2), s), dc);
        // n = 1: δc|a| + (γm + δc)δc + δt
        let b = polynomial_error_bound(1, &int(3), &int(2), s);
        assert_eq!(b, &dc * int(2) + (int(3) + &dc) * &dc + ratio(1, 8));
        let mut prev = Rational::zero();
        for a in 0..6 {
            let b = polynomial_error_bound(3, &int(2), &int(a), s);
            assert!(b >= prev);
            prev = b;
        }
        assert!(polynomial_error_bound(3, &int(2), &int(-2), s) == polynomial_error_bound(3, &int(2), &int(2), s));
        assert!(polynomial_error_bound(3, &int(2), &int(1), s) <= polynomial_error_bound(4, &int(2), &int(1), s));
        assert!(polynomial_error_bound(3, &int(2), &int(1), s) <= polynomial_error_bound(3, &int(3), &int(1), s));
        assert!(polynomial_error_bound(3, &int(2), &int(1), s) <= polynomial_error_bound(3, &int(2), &int(1), spec(3, 4)));
    }
}
