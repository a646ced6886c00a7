//! Closed-loop simulation of an exact plant against a fixed-point controller.
//!
//! The plant `ẋ = Ax + bu, y = cᵀx + du` is integrated with explicit Euler in
//! exact rationals; after every step the state is rounded to a multiple of
//! `2^-rounding_bits` so numerators stay bounded. The controller
//!
//! ```text
//! z_{k+1} = z_k + (h·A_C) z_k + (h·b_C) e_k
//! u_{k+1} = c_Cᵀ z_k
//! ```
//!
//! runs on [`SignedFixedPoint`] registers. `h·A_C` and `h·b_C` are formed
//! exactly and encoded once, so each entry costs a single quantization.
//! Overflowing intermediates wrap and the wrapped bits are used as-is,
//! like an unchecked hardware register.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{reliable_domain, AnalysisError, Op, ReliableDomain, SequencedAlgorithm};
use crate::fixedpoint::{FixedPointError, FixedPointSpec, SignedFixedPoint};
use crate::rational::{
    div_round_half_away, format_decimal, format_rational, int, parse_rational, ratio, Rational,
};

/// Default plant-state rounding, in bits after the binary point.
pub const DEFAULT_ROUNDING_BITS: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimulationError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("controller entry {entry} = {value} cannot be encoded: {source}")]
    Quantization {
        entry: String,
        value: String,
        source: FixedPointError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub type Matrix = Vec<Vec<Rational>>;

/// `ẋ = Ax + bu`, `y = cᵀx + du` with a scalar input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: Matrix,
    b: Vec<Rational>,
    c: Vec<Rational>,
    d: Rational,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Vec<Rational>, c: Vec<Rational>, d: Rational) -> Result<Self, SimulationError> {
        let n = a.len();
        if n == 0 {
            return Err(SimulationError::Dimension("A must have at least one row".into()));
        }
        if let Some(i) = a.iter().position(|row| row.len() != n) {
            return Err(SimulationError::Dimension(format!(
                "A is {n}x? but row {i} has {} entries",
                a[i].len()
            )));
        }
        if b.len() != n {
            return Err(SimulationError::Dimension(format!("b has {} entries, expected {n}", b.len())));
        }
        if c.len() != n {
            return Err(SimulationError::Dimension(format!("c has {} entries, expected {n}", c.len())));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[Rational] {
        &self.b
    }

    pub fn c(&self) -> &[Rational] {
        &self.c
    }

    pub fn d(&self) -> &Rational {
        &self.d
    }

    pub fn output(&self, x: &[Rational], u: &Rational) -> Rational {
        dot(&self.c, x) + &self.d * u
    }
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

/// One explicit Euler step: `x + h(Ax + bu)`, together with `y = cᵀx + du`
/// sampled before the step.
pub fn plant_step(
    x: &[Rational],
    u: &Rational,
    plant: &StateSpaceModel,
    h: &Rational,
) -> Result<(Vec<Rational>, Rational), SimulationError> {
    if x.len() != plant.dim() {
        return Err(SimulationError::Dimension(format!(
            "state has {} entries, plant has {}",
            x.len(),
            plant.dim()
        )));
    }
    let y = plant.output(x, u);
    let next = plant
        .a
        .iter()
        .zip(&plant.b)
        .zip(x)
        .map(|((row, bi), xi)| xi + h * (dot(row, x) + bi * u))
        .collect();
    Ok((next, y))
}

/// A continuous-time controller model sampled with step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteController {
    pub model: StateSpaceModel,
    pub h: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizationEntry {
    pub entry: String,
    #[serde(serialize_with = "ser_rational")]
    pub exact: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub encoded: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub error: Rational,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Controller coefficients encoded under one spec.
#[derive(Debug, Clone)]
pub struct QuantizedController {
    spec: FixedPointSpec,
    ha: Vec<Vec<SignedFixedPoint>>,
    hb: Vec<SignedFixedPoint>,
    c: Vec<SignedFixedPoint>,
    report: Vec<QuantizationEntry>,
}

impl DiscreteController {
    pub fn new(model: StateSpaceModel, h: Rational) -> Result<Self, SimulationError> {
        if !h.is_positive() {
            return Err(SimulationError::InvalidParameter(format!(
                "step size must be positive, got {}",
                format_rational(&h)
            )));
        }
        Ok(Self { model, h })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Encodes `h·A_C`, `h·b_C` and `c_C` entry by entry.
    pub fn quantize(&self, spec: FixedPointSpec) -> Result<QuantizedController, SimulationError> {
        let mut report = Vec::new();
        let mut enc = |entry: String, exact: Rational| {
            let v = SignedFixedPoint::encode(&exact, spec).map_err(|source| SimulationError::Quantization {
                entry: entry.clone(),
                value: format_rational(&exact),
                source,
            })?;
            let encoded = v.decode_wrapped();
            report.push(QuantizationEntry {
                entry,
                error: &encoded - &exact,
                exact,
                encoded,
            });
            Ok::<_, SimulationError>(v)
        };
        let m = &self.model;
        let mut ha = Vec::new();
        for (i, row) in m.a.iter().enumerate() {
            let mut out = Vec::new();
            for (j, a) in row.iter().enumerate() {
                out.push(enc(format!("hA[{i}][{j}]"), &self.h * a)?);
            }
            ha.push(out);
        }
        let hb = m
            .b
            .iter()
            .enumerate()
            .map(|(i, b)| enc(format!("hb[{i}]"), &self.h * b))
            .collect::<Result<_, _>>()?;
        let c = m
            .c
            .iter()
            .enumerate()
            .map(|(i, c)| enc(format!("c[{i}]"), c.clone()))
            .collect::<Result<_, _>>()?;
        Ok(QuantizedController { spec, ha, hb, c, report })
    }
}

impl QuantizedController {
    pub fn spec(&self) -> FixedPointSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.hb.len()
    }

    /// Per-entry quantization errors (`encoded - exact`).
    pub fn report(&self) -> &[QuantizationEntry] {
        &self.report
    }

    pub fn max_quantization_error(&self) -> Rational {
        self.report.iter().map(|e| e.error.abs()).max().unwrap_or_else(Rational::zero)
    }
}

/// Counts operations whose result is freshly tainted: dirty output from
/// clean operands. Taint that merely propagates is not recounted.
struct Alu {
    spec: FixedPointSpec,
    events: u32,
}

impl Alu {
    fn record(&mut self, a: &SignedFixedPoint, b: &SignedFixedPoint, r: SignedFixedPoint) -> SignedFixedPoint {
        if a.is_clean() && b.is_clean() && !r.is_clean() {
            self.events += 1;
        }
        r
    }

    fn add(&mut self, a: &SignedFixedPoint, b: &SignedFixedPoint) -> SignedFixedPoint {
        let r = a.add(b, self.spec);
        self.record(a, b, r)
    }

    fn times(&mut self, a: &SignedFixedPoint, b: &SignedFixedPoint) -> SignedFixedPoint {
        let r = a.times(b, self.spec);
        self.record(a, b, r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerStep {
    pub z_next: Vec<SignedFixedPoint>,
    pub u: SignedFixedPoint,
    pub overflow_events: u32,
}

/// One controller update in fixed-point arithmetic. `u` is computed from
/// the current state `z`, as printed (one-step output delay).
pub fn controller_step(
    z: &[SignedFixedPoint],
    e: &SignedFixedPoint,
    ctrl: &QuantizedController,
) -> Result<ControllerStep, SimulationError> {
    if z.len() != ctrl.dim() {
        return Err(SimulationError::Dimension(format!(
            "controller state has {} entries, expected {}",
            z.len(),
            ctrl.dim()
        )));
    }
    let spec = ctrl.spec;
    let mut alu = Alu { spec, events: 0 };
    let zero = SignedFixedPoint::zero(spec);
    let z_next = z
        .iter()
        .zip(&ctrl.ha)
        .zip(&ctrl.hb)
        .map(|((zi, row), hb)| {
            let mut acc = zero.clone();
            for (a, zj) in row.iter().zip(z) {
                let t = alu.times(a, zj);
                acc = alu.add(&acc, &t);
            }
            let t = alu.times(hb, e);
            acc = alu.add(&acc, &t);
            alu.add(zi, &acc)
        })
        .collect();
    let mut u = zero;
    for (c, zj) in ctrl.c.iter().zip(z) {
        let t = alu.times(c, zj);
        u = alu.add(&u, &t);
    }
    Ok(ControllerStep { z_next, u, overflow_events: alu.events })
}

/// The same update in exact rationals.
pub fn controller_step_exact(z: &[Rational], e: &Rational, ctrl: &DiscreteController) -> (Vec<Rational>, Rational) {
    let m = &ctrl.model;
    let z_next = m
        .a
        .iter()
        .zip(&m.b)
        .zip(z)
        .map(|((row, b), zi)| zi + &ctrl.h * (dot(row, z) + b * e))
        .collect();
    (z_next, dot(&m.c, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    /// Controller input `e = -y` (regulation to zero).
    Negative,
    /// Controller input `e = y`.
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerArithmetic {
    FixedPoint,
    Exact,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    pub plant: StateSpaceModel,
    pub controller: DiscreteController,
    pub spec: FixedPointSpec,
    pub t_end: Rational,
    pub x0: Vec<Rational>,
    pub z0: Vec<Rational>,
    pub feedback: Feedback,
    pub arithmetic: ControllerArithmetic,
    pub rounding_bits: u32,
}

impl ClosedLoopConfig {
    pub fn new(
        plant: StateSpaceModel,
        controller: DiscreteController,
        spec: FixedPointSpec,
        t_end: Rational,
        x0: Vec<Rational>,
        z0: Vec<Rational>,
    ) -> Result<Self, SimulationError> {
        if t_end.is_negative() {
            return Err(SimulationError::InvalidParameter("t_end must not be negative".into()));
        }
        if x0.len() != plant.dim() {
            return Err(SimulationError::Dimension(format!(
                "x0 has {} entries, plant has {}",
                x0.len(),
                plant.dim()
            )));
        }
        if z0.len() != controller.dim() {
            return Err(SimulationError::Dimension(format!(
                "z0 has {} entries, controller has {}",
                z0.len(),
                controller.dim()
            )));
        }
        Ok(Self {
            plant,
            controller,
            spec,
            t_end,
            x0,
            z0,
            feedback: Feedback::Negative,
            arithmetic: ControllerArithmetic::FixedPoint,
            rounding_bits: DEFAULT_ROUNDING_BITS,
        })
    }

    pub fn h(&self) -> &Rational {
        &self.controller.h
    }

    /// Last sample index, `⌈t_end / h⌉`.
    pub fn steps(&self) -> u64 {
        let n = (&self.t_end / self.h()).ceil().to_integer();
        u64::try_from(n).expect("step count fits in u64")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub k: u64,
    pub t: Rational,
    pub y: Rational,
    pub u: Rational,
    pub overflow_events: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub spec: FixedPointSpec,
    pub arithmetic: ControllerArithmetic,
    pub feedback: Feedback,
    pub steps: u64,
    pub total_overflows: u64,
    pub first_overflow_time: Option<Rational>,
    /// Largest `|z_i|` over the run, from the (possibly wrapped) bits.
    pub z_max: Rational,
    pub max_abs_y: Rational,
    pub final_y: Rational,
    pub rounding_bits: u32,
    pub max_quantization_error: Rational,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub records: Vec<SampleRecord>,
    pub summary: TraceSummary,
}

pub const CSV_HEADER: &str = "k,t,y,u,overflows";

impl SimulationTrace {
    /// Largest `|y|` among samples with `t` in `[from, to]`.
    pub fn max_abs_y_between(&self, from: &Rational, to: &Rational) -> Rational {
        self.records
            .iter()
            .filter(|r| r.t >= *from && r.t <= *to)
            .map(|r| r.y.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Trace as CSV, values rendered with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k,
                format_decimal(&r.t, 12),
                format_decimal(&r.y, 12),
                format_decimal(&r.u, 12),
                r.overflow_events
            ));
        }
        out
    }

    pub fn summary_json(&self, divergence: Option<&Rational>) -> serde_json::Value {
        let s = &self.summary;
        let dec = |r: &Rational| format_decimal(r, 12);
        json!({
            "spec": s.spec,
            "arithmetic": s.arithmetic,
            "feedback": s.feedback,
            "steps": s.steps,
            "total_overflows": s.total_overflows,
            "first_overflow_time": s.first_overflow_time.as_ref().map(dec),
            "divergence_time": divergence.map(dec),
            "z_max": dec(&s.z_max),
            "max_abs_y": dec(&s.max_abs_y),
            "final_y": dec(&s.final_y),
            "rounding_bits": s.rounding_bits,
            "max_quantization_error": dec(&s.max_quantization_error),
        })
    }
}

impl fmt::Display for TraceSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} steps={} overflows={} z_max={} max|y|={}",
            self.spec,
            self.steps,
            self.total_overflows,
            format_decimal(&self.z_max, 6),
            format_decimal(&self.max_abs_y, 6)
        )
    }
}

/// Affine map with rational coefficients applied to integer numerators:
/// `out_i = round(Σ_j m_ij v_j)`, ties away from zero. Coefficients share
/// one denominator so each row costs a single integer division.
#[derive(Debug, Clone)]
struct ScaledMap {
    num: Vec<Vec<BigInt>>,
    den: BigInt,
}

impl ScaledMap {
    fn new(rows: &[Vec<Rational>]) -> Self {
        let den = rows
            .iter()
            .flatten()
            .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let num = rows
            .iter()
            .map(|row| row.iter().map(|r| (r * &den).to_integer()).collect())
            .collect();
        Self { num, den }
    }

    fn raw(&self, row: usize, v: &[BigInt]) -> BigInt {
        self.num[row].iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn apply(&self, v: &[BigInt]) -> Vec<BigInt> {
        (0..self.num.len())
            .map(|i| div_round_half_away(&self.raw(i, v), &self.den))
            .collect()
    }
}

/// Euler increment `h[A | b]` for a model whose state and input are held as
/// numerators over a common power of two.
fn euler_map(model: &StateSpaceModel, h: &Rational) -> ScaledMap {
    let rows: Vec<Vec<Rational>> = model
        .a
        .iter()
        .zip(&model.b)
        .map(|(row, b)| row.iter().chain(std::iter::once(b)).map(|v| h * v).collect())
        .collect();
    ScaledMap::new(&rows)
}

fn output_map(model: &StateSpaceModel) -> ScaledMap {
    let row: Vec<Rational> = model.c.iter().chain(std::iter::once(&model.d)).cloned().collect();
    ScaledMap::new(&[row])
}

/// Advances numerators `x` (over `2^r`) by one Euler step with input `u`
/// (also over `2^r`). Equals rounding [`plant_step`]'s result to `2^-r`.
fn euler_step(map: &ScaledMap, x: &[BigInt], u: &BigInt) -> Vec<BigInt> {
    let mut v = x.to_vec();
    v.push(u.clone());
    map.apply(&v).into_iter().zip(x).map(|(d, xi)| xi + d).collect()
}

/// [`plant_step`] on `x` and `u` rounded to `2^-bits`, with the new state
/// rounded to `2^-bits`; computed on integer numerators.
pub fn plant_step_rounded(
    x: &[Rational],
    u: &Rational,
    plant: &StateSpaceModel,
    h: &Rational,
    bits: u32,
) -> Result<Vec<Rational>, SimulationError> {
    if x.len() != plant.dim() {
        return Err(SimulationError::Dimension(format!(
            "state has {} entries, plant has {}",
            x.len(),
            plant.dim()
        )));
    }
    let scale = BigInt::one() << bits;
    let to_num = |r: &Rational| div_round_half_away(&(r.numer() * &scale), r.denom());
    let xs: Vec<BigInt> = x.iter().map(to_num).collect();
    Ok(euler_step(&euler_map(plant, h), &xs, &to_num(u))
        .into_iter()
        .map(|n| Rational::new(n, BigInt::one() << bits))
        .collect())
}

enum ControllerState {
    Fixed(QuantizedController, Vec<SignedFixedPoint>),
    /// Numerators over `2^rounding_bits`.
    Exact { step: ScaledMap, out: ScaledMap, z: Vec<BigInt> },
}

/// Simulates `k = 0..=⌈t_end/h⌉`. At each sample: `y_k` is read from the
/// plant, the controller consumes `e_k = ∓y_k` and produces `u_{k+1}`, and
/// the plant advances with the held `u_k` (`u_0 = 0`).
///
/// The plant state is kept on the `2^-rounding_bits` grid. In exact
/// controller mode the controller state, its input and its output are kept
/// on the same grid.
pub fn run_closed_loop(cfg: &ClosedLoopConfig) -> Result<SimulationTrace, SimulationError> {
    let spec = cfg.spec;
    let h = cfg.h().clone();
    let n = cfg.steps();
    let bits = cfg.rounding_bits;
    let scale = BigInt::one() << bits;
    let to_num = |r: &Rational| div_round_half_away(&(r.numer() * &scale), r.denom());
    let from_num = |v: &BigInt| Rational::new(v.clone(), scale.clone());

    let mut state = match cfg.arithmetic {
        ControllerArithmetic::FixedPoint => {
            let q = cfg.controller.quantize(spec)?;
            let z = cfg.z0.iter().map(|v| SignedFixedPoint::encode_wrapping(v, spec).laundered()).collect();
            ControllerState::Fixed(q, z)
        }
        ControllerArithmetic::Exact => ControllerState::Exact {
            step: euler_map(&cfg.controller.model, &h),
            out: output_map(&cfg.controller.model),
            z: cfg.z0.iter().map(to_num).collect(),
        },
    };
    let max_q_err = match &state {
        ControllerState::Fixed(q, _) => q.max_quantization_error(),
        ControllerState::Exact { .. } => Rational::zero(),
    };

    let plant_map = euler_map(&cfg.plant, &h);
    let y_map = output_map(&cfg.plant);
    let y_den = &y_map.den * &scale;
    let frac_shift = bits
        .checked_sub(spec.frac_bits())
        .ok_or_else(|| SimulationError::InvalidParameter("rounding_bits must be at least p".into()))?;

    let mut x: Vec<BigInt> = cfg.x0.iter().map(to_num).collect();
    let mut u = BigInt::zero();
    let mut records = Vec::with_capacity(n as usize + 1);
    let mut total = 0u64;
    let mut first_overflow = None;
    let mut z_max = Rational::zero();
    let mut max_abs_y = Rational::zero();

    for k in 0..=n {
        let t = Rational::from_integer(BigInt::from(k)) * &h;
        let mut xu = x.clone();
        xu.push(u.clone());
        let y = Rational::new(y_map.raw(0, &xu), y_den.clone());
        let e = match cfg.feedback {
            Feedback::Negative => -y.clone(),
            Feedback::Positive => y.clone(),
        };
        let (u_next, events) = match &mut state {
            ControllerState::Fixed(q, z) => {
                let sample = SignedFixedPoint::encode_wrapping(&e, spec);
                let sample_event = u32::from(!sample.is_clean());
                let step = controller_step(z, &sample.laundered(), q)?;
                *z = step.z_next.iter().map(SignedFixedPoint::laundered).collect();
                for zi in z.iter() {
                    z_max = z_max.max(zi.decode_wrapped().abs());
                }
                (step.u.raw_units() << frac_shift, step.overflow_events + sample_event)
            }
            ControllerState::Exact { step, out, z } => {
                let e_num = to_num(&e);
                let mut zc = z.clone();
                zc.push(BigInt::zero());
                let u_next = out.apply(&zc)[0].clone();
                *z = euler_step(step, z, &e_num);
                for zi in z.iter() {
                    z_max = z_max.max(from_num(zi).abs());
                }
                (u_next, 0)
            }
        };
        if events > 0 && first_overflow.is_none() {
            first_overflow = Some(t.clone());
        }
        total += u64::from(events);
        max_abs_y = max_abs_y.max(y.abs());
        records.push(SampleRecord { k, t, y, u: from_num(&u), overflow_events: events });
        x = euler_step(&plant_map, &x, &u);
        u = u_next;
    }

    let final_y = records.last().map(|r| r.y.clone()).unwrap_or_else(Rational::zero);
    Ok(SimulationTrace {
        records,
        summary: TraceSummary {
            spec,
            arithmetic: cfg.arithmetic,
            feedback: cfg.feedback,
            steps: n,
            total_overflows: total,
            first_overflow_time: first_overflow,
            z_max,
            max_abs_y,
            final_y,
            rounding_bits: cfg.rounding_bits,
            max_quantization_error: max_q_err,
        },
    })
}

/// Earliest `t` such that `|y|` exceeds `threshold` somewhere in
/// `[t, t + window]`, counting only times after `|y|` first dropped below
/// `threshold / 10`.
pub fn detect_divergence(trace: &SimulationTrace, window: &Rational, threshold: &Rational) -> Option<Rational> {
    assert!(window.is_positive() && threshold.is_positive());
    let low = threshold / int(10);
    let recs = &trace.records;
    let settled = recs.iter().position(|r| r.y.abs() < low)?;
    let blown = settled + recs[settled..].iter().position(|r| r.y.abs() > *threshold)?;
    let t_blown = &recs[blown].t;
    let start = recs[settled..=blown]
        .iter()
        .find(|r| t_blown - &r.t <= *window)
        .expect("the crossing sample itself qualifies");
    Some(start.t.clone())
}

/// `Σ_j |(c_Cᵀ A_C)_j|` and `c_Cᵀ b_C`.
pub fn output_gains(controller: &StateSpaceModel) -> (Rational, Rational) {
    let n = controller.dim();
    let s = (0..n)
        .map(|j| {
            controller
                .c
                .iter()
                .zip(&controller.a)
                .fold(Rational::zero(), |acc, (ci, row)| acc + ci * &row[j])
                .abs()
        })
        .fold(Rational::zero(), |a, b| a + b);
    (s, dot(&controller.c, &controller.b))
}

/// Interval bound on `c_Cᵀ(A_C z + b_C y)` for `|z_i| <= z_max` and
/// `y` in `y_range`.
pub fn controller_output_bound(
    controller: &StateSpaceModel,
    z_max: &Rational,
    y_range: (&Rational, &Rational),
) -> (Rational, Rational) {
    assert!(!z_max.is_negative(), "z_max must be non-negative");
    let (s, cb) = output_gains(controller);
    let state = s * z_max;
    let (a, b) = (&cb * y_range.0, &cb * y_range.1);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (lo - &state, hi + &state)
}

/// The output estimate as a two-step algorithm in `y`:
/// `(y - Σ|c_CᵀA_C| z_max / c_Cᵀb_C) · c_Cᵀb_C`, with both constants
/// rounded onto the grid and clamped to `±M`.
pub fn output_bound_algorithm(
    controller: &StateSpaceModel,
    spec: FixedPointSpec,
    z_max: &Rational,
) -> Result<SequencedAlgorithm, SimulationError> {
    let (s, cb) = output_gains(controller);
    if cb.is_zero() {
        return Err(SimulationError::InvalidParameter("c_C·b_C is zero".into()));
    }
    let m = spec.max_magnitude();
    let snap = |v: Rational| {
        let v = v.max(-m.clone()).min(m.clone());
        SignedFixedPoint::encode(&v, spec).map(|e| e.decode_wrapped())
    };
    let offset = snap(-(s * z_max) / &cb).map_err(AnalysisError::from)?;
    let gain = snap(cb).map_err(AnalysisError::from)?;
    Ok(SequencedAlgorithm::with_constants(spec, [(Op::Add, offset), (Op::Mul, gain)])?)
}

/// Reliable domain of [`output_bound_algorithm`].
pub fn output_reliable_domain(
    controller: &StateSpaceModel,
    spec: FixedPointSpec,
    z_max: &Rational,
) -> Result<ReliableDomain, SimulationError> {
    Ok(reliable_domain(&output_bound_algorithm(controller, spec, z_max)?)?)
}

fn lit(s: &str) -> Rational {
    parse_rational(s).expect("valid literal")
}

fn lits(v: &[&str]) -> Vec<Rational> {
    v.iter().map(|s| lit(s)).collect()
}

/// The unstable second-order plant of the case study.
pub fn case_study_plant() -> StateSpaceModel {
    StateSpaceModel::new(
        vec![vec![int(1), int(1)], vec![int(1), int(0)]],
        vec![int(2), int(0)],
        vec![ratio(1, 2), ratio(1, 2)],
        int(0),
    )
    .expect("static dimensions")
}

/// The fourth-order robust controller of the case study, with its printed
/// four-decimal coefficients taken verbatim.
pub fn case_study_controller() -> DiscreteController {
    let model = StateSpaceModel::new(
        vec![
            lits(&["-1.03", "-0.5", "0", "0"]),
            lits(&["1", "0", "0", "0"]),
            lits(&["0.0511", "0.0216", "-513.9303", "510.7020"]),
            lits(&["0.0314", "0.0122", "-315.2434", "316.2515"]),
        ],
        lits(&["5", "0", "-1023.4", "-632.5"]),
        lits(&["0.0002", "0.001", "-1.6189", "-1.0018"]),
        int(0),
    )
    .expect("static dimensions");
    DiscreteController::new(model, ratio(1, 10_000)).expect("positive step")
}

/// Case-study loop over `[0, 30]` s from `x0 = [0, 1]`, `z0 = 0`.
pub fn case_study_config(spec: FixedPointSpec) -> ClosedLoopConfig {
    ClosedLoopConfig::new(
        case_study_plant(),
        case_study_controller(),
        spec,
        int(30),
        vec![int(0), int(1)],
        vec![Rational::zero(); 4],
    )
    .expect("consistent dimensions")
}

/// `(p, q, D_R,min, D_R,max)` reported for the three case-study specs.
pub fn reference_table() -> [(u32, u32, Rational, Rational); 3] {
    [
        (11, 15, lit("-1.0352"), lit("27.5781")),
        (12, 14, lit("-2.5435"), lit("11.7632")),
        (12, 13, lit("1.0332"), lit("8.1863")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: u32, q: u32) -> FixedPointSpec {
        FixedPointSpec::new(p, q).unwrap()
    }

    fn scalar(a: i64, b: i64, c: i64) -> StateSpaceModel {
        StateSpaceModel::new(vec![vec![int(a)]], vec![int(b)], vec![int(c)], int(0)).unwrap()
    }

    #[test]
    fn model_dimensions_are_checked() {
        assert!(StateSpaceModel::new(vec![vec![int(1), int(2)]], vec![int(1)], vec![int(1)], int(0)).is_err());
        assert!(StateSpaceModel::new(vec![vec![int(1)]], vec![], vec![int(1)], int(0)).is_err());
        assert!(StateSpaceModel::new(vec![], vec![], vec![], int(0)).is_err());
        let p = case_study_plant();
        assert!(plant_step(&[int(1)], &int(0), &p, &ratio(1, 10)).is_err());
    }

    #[test]
    fn plant_step_examples() {
        let p = case_study_plant();
        let h = ratio(1, 10_000);
        let (x, y) = plant_step(&[int(0), int(0)], &int(0), &p, &h).unwrap();
        assert_eq!((x, y), (vec![int(0), int(0)], int(0)));
        let (x, y) = plant_step(&[int(0), int(1)], &int(0), &p, &h).unwrap();
        assert_eq!(x, vec![ratio(1, 10_000), int(1)]);
        assert_eq!(y, ratio(1, 2));
    }

    #[test]
    fn rounded_step_matches_exact_step() {
        use crate::rational::round_to_dyadic;
        let p = case_study_plant();
        let h = ratio(1, 10_000);
        let mut x = vec![ratio(1, 3), ratio(-5, 7)];
        let u = ratio(-3, 8);
        for bits in [8u32, 64, 256] {
            for _ in 0..20 {
                let xr: Vec<_> = x.iter().map(|v| round_to_dyadic(v, bits)).collect();
                let (exact, _) = plant_step(&xr, &u, &p, &h).unwrap();
                let expected: Vec<_> = exact.iter().map(|v| round_to_dyadic(v, bits)).collect();
                assert_eq!(plant_step_rounded(&xr, &u, &p, &h, bits).unwrap(), expected);
                x = exact;
            }
        }
    }

    #[test]
    fn plant_step_is_linear() {
        let p = case_study_plant();
        let h = ratio(1, 100);
        let x = vec![ratio(3, 7), ratio(-2, 5)];
        let u = ratio(5, 3);
        let alpha = ratio(-9, 4);
        let (x1, y1) = plant_step(&x, &u, &p, &h).unwrap();
        let xs: Vec<_> = x.iter().map(|v| v * &alpha).collect();
        let (x2, y2) = plant_step(&xs, &(&u * &alpha), &p, &h).unwrap();
        assert_eq!(y2, y1 * &alpha);
        for (a, b) in x1.iter().zip(&x2) {
            assert_eq!(a * &alpha, *b);
        }
    }

    #[test]
    fn controller_step_examples() {
        let s = spec(4, 4);
        let ctrl = case_study_controller();
        let q = ctrl.quantize(spec(11, 15)).unwrap();
        let z = vec![SignedFixedPoint::zero(q.spec()); 4];
        let r = controller_step(&z, &SignedFixedPoint::zero(q.spec()), &q).unwrap();
        assert!(r.z_next.iter().all(|v| v.decode().unwrap().is_zero()));
        assert!(r.u.decode().unwrap().is_zero());
        assert_eq!(r.overflow_events, 0);

        let wire = DiscreteController::new(scalar(0, 1, 1), int(1)).unwrap().quantize(s).unwrap();
        let y = SignedFixedPoint::encode(&ratio(5, 4), s).unwrap();
        let z = SignedFixedPoint::encode(&ratio(-3, 2), s).unwrap();
        let r = controller_step(std::slice::from_ref(&z), &y, &wire).unwrap();
        assert_eq!(r.z_next[0].decode().unwrap(), ratio(-1, 4));
        assert_eq!(r.u, z);
        let r = controller_step(&[SignedFixedPoint::zero(s)], &y, &wire).unwrap();
        assert_eq!(r.z_next[0], y);
    }

    #[test]
    fn controller_step_counts_fresh_overflows_once() {
        let s = spec(2, 2);
        let ctrl = DiscreteController::new(scalar(2, 2, 3), int(1)).unwrap().quantize(s).unwrap();
        let z = SignedFixedPoint::encode(&int(3), s).unwrap();
        let e = SignedFixedPoint::encode(&int(3), s).unwrap();
        let r = controller_step(&[z], &e, &ctrl).unwrap();
        // 2·3 wraps; the accumulation then carries the taint without recount
        assert!(!r.z_next[0].is_clean());
        assert!(!r.u.is_clean());
        assert_eq!(r.overflow_events, 3);
    }

    #[test]
    fn quantization_report() {
        let q = case_study_controller().quantize(spec(11, 15)).unwrap();
        assert_eq!(q.report().len(), 16 + 4 + 4);
        assert!(q.max_quantization_error() <= ratio(1, 4096));
        let e = &q.report()[0];
        assert_eq!(e.entry, "hA[0][0]");
        assert_eq!(e.exact, lit("-0.000103"));
        assert_eq!(e.encoded, Rational::zero());
        assert!(matches!(
            DiscreteController::new(scalar(0, 1, 9), int(1)).unwrap().quantize(spec(2, 2)),
            Err(SimulationError::Quantization { .. })
        ));
    }

    #[test]
    fn zero_initial_conditions_stay_zero() {
        let mut cfg = case_study_config(spec(11, 15));
        cfg.x0 = vec![int(0), int(0)];
        cfg.t_end = ratio(1, 100);
        let tr = run_closed_loop(&cfg).unwrap();
        assert_eq!(tr.records.len(), 101);
        assert!(tr.records.iter().all(|r| r.y.is_zero() && r.u.is_zero()));
        assert_eq!(tr.summary.total_overflows, 0);
        assert!(detect_divergence(&tr, &ratio(1, 2), &int(1)).is_none());
    }

    #[test]
    fn trace_times_are_contiguous() {
        let mut cfg = case_study_config(spec(11, 15));
        cfg.t_end = ratio(1, 1000);
        let tr = run_closed_loop(&cfg).unwrap();
        for (i, r) in tr.records.iter().enumerate() {
            assert_eq!(r.k, i as u64);
            assert_eq!(r.t, Rational::from_integer(BigInt::from(i)) * ratio(1, 10_000));
        }
        assert_eq!(tr.records[0].y, ratio(1, 2));
        assert!(tr.records[0].u.is_zero());
        let csv = tr.to_csv();
        assert!(csv.starts_with("k,t,y,u,overflows\n0,0,0.5,0,0\n"));
    }

    #[test]
    fn divergence_detection() {
        let mk = |ys: &[i64]| SimulationTrace {
            records: ys
                .iter()
                .enumerate()
                .map(|(k, y)| SampleRecord {
                    k: k as u64,
                    t: int(k as i64),
                    y: ratio(*y, 100),
                    u: int(0),
                    overflow_events: 0,
                })
                .collect(),
            summary: run_closed_loop(&{
                let mut c = case_study_config(spec(11, 15));
                c.t_end = ratio(1, 10_000);
                c
            })
            .unwrap()
            .summary,
        };
        // never settled below threshold/10
        assert_eq!(detect_divergence(&mk(&[200, 300, 500]), &int(1), &int(1)), None);
        // settles at t=1, blows up at t=5, window 2 → 3
        let tr = mk(&[50, 5, 5, 5, 5, 200]);
        assert_eq!(detect_divergence(&tr, &int(2), &int(1)), Some(int(3)));
        assert_eq!(detect_divergence(&tr, &int(10), &int(1)), Some(int(1)));
        assert_eq!(detect_divergence(&mk(&[50, 5, 5, 5]), &int(1), &int(1)), None);
    }

    #[test]
    fn output_bound_examples() {
        let c = case_study_controller();
        let z = Rational::zero();
        assert_eq!(controller_output_bound(&c.model, &z, (&z, &z)), (int(0), int(0)));
        let (l1, h1) = controller_output_bound(&c.model, &int(1), (&int(-1), &int(2)));
        let (l2, h2) = controller_output_bound(&c.model, &int(3), (&int(-1), &int(2)));
        assert!(l2 <= l1 && h1 <= h2);
        let (_, cb) = output_gains(&c.model);
        assert!((cb - lit("2290.4")).abs() < ratio(1, 10));
    }

    #[test]
    fn output_domain_width_tracks_integer_bits() {
        let c = case_study_controller();
        for q in [13u32, 14, 15] {
            let s = spec(12, q);
            let d = output_reliable_domain(&c.model, s, &Rational::zero()).unwrap();
            assert!(d.contains(&Rational::zero()));
            let width = &d.w_max - &d.w_min;
            let expected = Rational::from_integer(BigInt::from(2u32 << q)) / lit("2290.4");
            assert!((width - expected).abs() < ratio(1, 100));
        }
    }
}
