//! JSON run configuration.
//!
//! Every number that feeds the exact pipeline is written as a string
//! (`"0.0511"`, `"-7/2"`) or a JSON integer, never as a float.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use fxguard_core::analysis::{Op, Operand, SequencedAlgorithm};
use fxguard_core::rational::{parse_rational, Rational};
use fxguard_core::simulation::{
    ClosedLoopConfig, ControllerArithmetic, DiscreteController, Feedback, StateSpaceModel,
};
use fxguard_core::FixedPointSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub message: String,
    /// Dotted field path such as `plant.A[0][1]`.
    pub path: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl ConfigError {
    fn at(path: &str, message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            path: Some(path.to_string()),
            line: None,
            column: None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at line {l}, column {c}")?;
        }
        if let Some(p) = self.path.as_deref().filter(|p| !p.is_empty() && *p != ".") {
            write!(f, " in field `{p}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// An exact rational read from a string or an integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Num(pub Rational);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rational as a string (\"0.5\", \"-7/2\") or an integer")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Num, E> {
                parse_rational(s).map(Num).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(Rational::from_integer(v.into())))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(Rational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Err(E::custom(format!(
                    "floating-point literal {v} is not accepted; quote it as a string"
                )))
            }
        }
        d.deserialize_any(V)
    }
}

fn nums(v: &[Num]) -> Vec<Rational> {
    v.iter().map(|n| n.0.clone()).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Num>>,
    pub b: Vec<Num>,
    pub c: Vec<Num>,
    #[serde(default)]
    pub d: Option<Num>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Num>>,
    pub b: Vec<Num>,
    pub c: Vec<Num>,
    pub h: Num,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub t_end: Num,
    pub x0: Vec<Num>,
    pub z0: Vec<Num>,
    #[serde(default = "default_feedback")]
    pub feedback: Feedback,
    #[serde(default = "default_arithmetic")]
    pub arithmetic: ControllerArithmetic,
    #[serde(default)]
    pub rounding_bits: Option<u32>,
}

fn default_feedback() -> Feedback {
    Feedback::Negative
}

fn default_arithmetic() -> ControllerArithmetic {
    ControllerArithmetic::FixedPoint
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub op: Op,
    #[serde(default)]
    pub constant: Option<Num>,
    #[serde(default)]
    pub operand: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplementationConfig {
    pub lower: Num,
    pub upper: Num,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ZMax {
    Value(Rational),
    FromSimulation,
}

impl<'de> Deserialize<'de> for ZMax {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) if s == "from_simulation" => Ok(ZMax::FromSimulation),
            Raw::Text(s) => parse_rational(&s).map(ZMax::Value).map_err(de::Error::custom),
            Raw::Int(v) => Ok(ZMax::Value(Rational::from_integer(v.into()))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub z_max: ZMax,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheckConfig {
    pub cases: usize,
    #[serde(default = "default_cross_bits")]
    pub max_bits: u32,
}

fn default_cross_bits() -> u32 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub plant: Option<ModelConfig>,
    #[serde(default)]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub spec: Option<FixedPointSpec>,
    #[serde(default)]
    pub specs: Option<Vec<FixedPointSpec>>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub algorithm: Option<Vec<StepConfig>>,
    #[serde(default)]
    pub implementation: Option<ImplementationConfig>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub target: Option<Num>,
    #[serde(default)]
    pub cross_check: Option<CrossCheckConfig>,
}

/// Parses a config, reporting the position and field path of the first
/// problem.
pub fn parse(text: &str) -> Result<Config, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: Config = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ConfigError {
            message: strip_position(&inner.to_string()),
            path: Some(path),
            line: Some(inner.line()),
            column: Some(inner.column()),
        }
    })?;
    de.end().map_err(|e| ConfigError {
        message: strip_position(&e.to_string()),
        path: None,
        line: Some(e.line()),
        column: Some(e.column()),
    })?;
    if cfg.spec.is_some() && cfg.specs.is_some() {
        return Err(ConfigError::at("specs", "give either `spec` or `specs`, not both"));
    }
    Ok(cfg)
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

impl Config {
    /// Spec rows in the order given; empty when none are configured.
    pub fn spec_rows(&self) -> Vec<FixedPointSpec> {
        match (&self.spec, &self.specs) {
            (Some(s), _) => vec![*s],
            (None, Some(v)) => v.clone(),
            (None, None) => Vec::new(),
        }
    }

    pub fn target(&self) -> Rational {
        self.target.as_ref().map(|n| n.0.clone()).unwrap_or_default()
    }

    pub fn plant(&self) -> Result<StateSpaceModel, ConfigError> {
        let p = self.plant.as_ref().ok_or_else(|| ConfigError::at("plant", "section is required"))?;
        model("plant", &p.a, &p.b, &p.c, p.d.as_ref())
    }

    pub fn controller(&self) -> Result<DiscreteController, ConfigError> {
        let c = self
            .controller
            .as_ref()
            .ok_or_else(|| ConfigError::at("controller", "section is required"))?;
        let m = model("controller", &c.a, &c.b, &c.c, None)?;
        DiscreteController::new(m, c.h.0.clone()).map_err(|e| ConfigError::at("controller.h", e.to_string()))
    }

    pub fn closed_loop(&self, spec: FixedPointSpec) -> Result<ClosedLoopConfig, ConfigError> {
        let sim = self.sim.as_ref().ok_or_else(|| ConfigError::at("sim", "section is required"))?;
        let mut cfg = ClosedLoopConfig::new(
            self.plant()?,
            self.controller()?,
            spec,
            sim.t_end.0.clone(),
            nums(&sim.x0),
            nums(&sim.z0),
        )
        .map_err(|e| ConfigError::at("sim", e.to_string()))?;
        cfg.feedback = sim.feedback;
        cfg.arithmetic = sim.arithmetic;
        if let Some(bits) = sim.rounding_bits {
            if bits < spec.frac_bits() {
                return Err(ConfigError::at("sim.rounding_bits", "must be at least p"));
            }
            cfg.rounding_bits = bits;
        }
        Ok(cfg)
    }

    /// The configured algorithm under `spec`, if any.
    pub fn algorithm(&self, spec: FixedPointSpec) -> Result<Option<SequencedAlgorithm>, ConfigError> {
        let Some(steps) = &self.algorithm else { return Ok(None) };
        let mut out = Vec::with_capacity(steps.len());
        for (i, s) in steps.iter().enumerate() {
            let operand = match (&s.constant, s.operand.as_deref()) {
                (Some(c), None) => Operand::Constant(c.0.clone()),
                (None, Some("input")) => Operand::Input,
                (None, Some(other)) => {
                    return Err(ConfigError::at(
                        &format!("algorithm[{i}].operand"),
                        format!("unknown operand `{other}` (only \"input\" is supported)"),
                    ))
                }
                _ => {
                    return Err(ConfigError::at(
                        &format!("algorithm[{i}]"),
                        "each step needs exactly one of `constant` or `operand`",
                    ))
                }
            };
            out.push((s.op, operand));
        }
        SequencedAlgorithm::new(spec, out)
            .map(Some)
            .map_err(|e| ConfigError::at("algorithm", format!("{e} under {spec}")))
    }
}

fn model(
    name: &str,
    a: &[Vec<Num>],
    b: &[Num],
    c: &[Num],
    d: Option<&Num>,
) -> Result<StateSpaceModel, ConfigError> {
    StateSpaceModel::new(
        a.iter().map(|row| nums(row)).collect(),
        nums(b),
        nums(c),
        d.map(|n| n.0.clone()).unwrap_or_default(),
    )
    .map_err(|e| ConfigError::at(name, e.to_string()))
}
