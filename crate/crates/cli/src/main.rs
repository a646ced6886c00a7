//! `fxguard`: reliable-domain analysis, certification and closed-loop
//! simulation of fixed-point controller implementations.
//!
//! Exit codes: 0 success or reliable, 1 not reliable, 2 configuration or
//! usage error, 3 exhaustive-search guard violation.

mod config;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use fxguard_core::analysis::{
    certify, reliable_domain, AnalysisError, CertificationMethod, Implementation, SequencedAlgorithm,
    DEFAULT_EXHAUSTIVE_BITS,
};
use fxguard_core::rational::{format_decimal, format_rational, ratio, Rational};
use fxguard_core::simulation::{detect_divergence, output_bound_algorithm, run_closed_loop};
use fxguard_core::FixedPointSpec;

use config::{Config, ConfigError, ZMax};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const GUARD_ENV: &str = "FXGUARD_MAX_EXHAUSTIVE_BITS";

#[derive(Debug, Parser)]
#[command(name = "fxguard", version, about = "Overflow analysis for fixed-point controller implementations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for reports, certificates and traces (created if absent).
    #[arg(long, global = true, value_name = "DIR", default_value = "fxguard-out")]
    out: PathBuf,
    /// Certification method.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Interval)]
    mode: Mode,
    /// Seed for randomized cross-checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reliable domain per spec row, with containment of the target.
    Analyze,
    /// Certify declared input bounds against the reliable domain.
    Certify,
    /// Closed-loop simulation per spec row.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Interval,
    Exhaustive,
}

impl From<Mode> for CertificationMethod {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Interval => CertificationMethod::Interval,
            Mode::Exhaustive => CertificationMethod::Exhaustive,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(ConfigError),
    Guard(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 2,
            Failure::Guard(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Guard(m) => f.write_str(m),
            Failure::Config(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

struct Run {
    cli: Cli,
    cfg: Config,
    hash: String,
}

impl Run {
    fn say(&self, line: impl AsRef<str>) {
        if !self.cli.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn header(&self, command: &str) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(command));
        m.insert("tool_version".into(), json!(TOOL_VERSION));
        m.insert("config_sha256".into(), json!(self.hash));
        m.insert("seed".into(), json!(self.cli.seed));
        m
    }

    /// Writes every file or none: existing targets abort the run unless
    /// `--force` is given.
    fn write_outputs(&self, files: &[(String, String)]) -> Result<(), Failure> {
        let dir = &self.cli.out;
        if !self.cli.force {
            if let Some((name, _)) = files.iter().find(|(n, _)| dir.join(n).exists()) {
                return Err(Failure::Usage(format!(
                    "refusing to overwrite {} (use --force)",
                    dir.join(name).display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn load(path: &Path) -> Result<(Config, String), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| Failure::Usage(format!("{} is not UTF-8", path.display())))?;
    Ok((config::parse(&text)?, hash))
}

fn exhaustive_limit() -> Result<u32, Failure> {
    match std::env::var(GUARD_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{GUARD_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_EXHAUSTIVE_BITS),
    }
}

fn spec_json(s: FixedPointSpec) -> Value {
    json!({"p": s.frac_bits(), "q": s.int_bits()})
}

fn tag(s: FixedPointSpec) -> String {
    format!("p{}-q{}", s.frac_bits(), s.int_bits())
}

fn dec(r: &Rational) -> String {
    format_decimal(r, 12)
}

/// Algorithm to analyse for one row: the configured one, or the controller
/// output estimate built from `z_max`.
fn row_algorithm(cfg: &Config, spec: FixedPointSpec) -> Result<(SequencedAlgorithm, Option<Rational>), Failure> {
    if let Some(a) = cfg.algorithm(spec)? {
        return Ok((a, None));
    }
    let Some(analysis) = &cfg.analysis else {
        return Err(ConfigError {
            message: "give an `algorithm`, or a `controller` with `analysis.z_max`".into(),
            path: Some("algorithm".into()),
            line: None,
            column: None,
        }
        .into());
    };
    let controller = cfg.controller()?;
    let z_max = match &analysis.z_max {
        ZMax::Value(v) => v.clone(),
        ZMax::FromSimulation => {
            let trace = run_closed_loop(&cfg.closed_loop(spec)?).map_err(|e| Failure::Usage(e.to_string()))?;
            trace.summary.z_max
        }
    };
    let alg = output_bound_algorithm(&controller.model, spec, &z_max).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((alg, Some(z_max)))
}

fn analyze(run: &Run) -> Result<u8, Failure> {
    let target = run.cfg.target();
    let rows: Vec<Result<(Value, String), Failure>> = run
        .cfg
        .spec_rows()
        .into_par_iter()
        .map(|spec| {
            let (alg, z_max) = row_algorithm(&run.cfg, spec)?;
            let mut row = json!({
                "spec": spec_json(spec),
                "source": if z_max.is_some() { "controller_output_bound" } else { "algorithm" },
                "z_max": z_max.as_ref().map(dec),
                "target": format_rational(&target),
            });
            let line = match reliable_domain(&alg) {
                Ok(d) => {
                    let inside = d.contains(&target);
                    let verdict = format!(
                        "target {} {} D_R",
                        format_decimal(&target, 6),
                        if inside { "inside" } else { "outside" }
                    );
                    row["d_r"] = json!({
                        "w_min": format_rational(&d.w_min),
                        "w_max": format_rational(&d.w_max),
                        "w_min_decimal": dec(&d.w_min),
                        "w_max_decimal": dec(&d.w_max),
                    });
                    row["gamma_bounds"] = json!({"min": format_rational(&d.gamma_min), "max": format_rational(&d.gamma_max)});
                    row["target_inside"] = json!(inside);
                    row["verdict"] = json!(verdict);
                    format!(
                        "{spec}  D_R = [{}, {}]  Gamma = [{}, {}]  {verdict}",
                        format_decimal(&d.w_min, 8),
                        format_decimal(&d.w_max, 8),
                        format_decimal(&d.gamma_min, 8),
                        format_decimal(&d.gamma_max, 8)
                    )
                }
                Err(e @ (AnalysisError::NoReliableDomain | AnalysisError::EmptyAlgorithm)) => {
                    row["d_r"] = Value::Null;
                    row["target_inside"] = json!(false);
                    row["verdict"] = json!(e.to_string());
                    format!("{spec}  {e}")
                }
                Err(e) => return Err(Failure::Usage(e.to_string())),
            };
            Ok((row, line))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut report = run.header("analyze");
    report.insert("rows".into(), Value::Array(rows.iter().map(|r| r.0.clone()).collect()));
    run.write_outputs(&[("analysis.json".into(), pretty(&Value::Object(report)))])?;
    for (_, line) in &rows {
        run.say(line);
    }
    Ok(0)
}

fn certify_cmd(run: &Run) -> Result<u8, Failure> {
    let limit = exhaustive_limit()?;
    let method = CertificationMethod::from(run.cli.mode);
    let imp_cfg = run.cfg.implementation.as_ref();
    let mut files = Vec::new();
    let mut lines = Vec::new();
    let mut all_reliable = true;
    for spec in run.cfg.spec_rows() {
        let imp_cfg = imp_cfg.ok_or_else(|| ConfigError {
            message: "section is required".into(),
            path: Some("implementation".into()),
            line: None,
            column: None,
        })?;
        let (alg, _) = row_algorithm(&run.cfg, spec)?;
        let imp = Implementation::from_bounds(&imp_cfg.lower.0, &imp_cfg.upper.0, alg).map_err(|e| ConfigError {
            message: e.to_string(),
            path: Some("implementation".into()),
            line: None,
            column: None,
        })?;
        let cert = match certify(&imp, method, limit) {
            Ok(c) => c,
            Err(e @ AnalysisError::ExhaustiveGuard { .. }) => {
                return Err(Failure::Guard(format!("{e} (raise {GUARD_ENV} to override)")))
            }
            Err(e) => return Err(Failure::Usage(e.to_string())),
        };
        all_reliable &= cert.is_reliable();
        let mut body = cert.to_json(TOOL_VERSION);
        body["config_sha256"] = json!(run.hash);
        files.push((format!("certificate-{}.json", tag(spec)), pretty(&body)));
        lines.push(match &cert.witness {
            _ if cert.is_reliable() => format!("{spec}  reliable"),
            Some(w) => format!("{spec}  not reliable, witness w = {} ({})", format_decimal(w, 12), format_rational(w)),
            None => format!("{spec}  not reliable (declared bounds leave the reliable domain)"),
        });
    }
    if let Some(cc) = &run.cfg.cross_check {
        let summary = sweep::cross_check(run.cli.seed, cc.cases, cc.max_bits, limit);
        all_reliable &= summary.violations == 0;
        lines.push(summary.to_string());
        let mut report = run.header("certify");
        report.insert("cross_check".into(), summary.to_json());
        files.push(("cross-check.json".into(), pretty(&Value::Object(report))));
    }
    run.write_outputs(&files)?;
    for l in &lines {
        run.say(l);
    }
    Ok(if all_reliable { 0 } else { 1 })
}

fn simulate(run: &Run) -> Result<u8, Failure> {
    let rows: Vec<Result<(FixedPointSpec, String, Value), Failure>> = run
        .cfg
        .spec_rows()
        .into_par_iter()
        .map(|spec| {
            let cl = run.cfg.closed_loop(spec)?;
            let trace = run_closed_loop(&cl).map_err(|e| {
                Failure::Config(ConfigError {
                    message: e.to_string(),
                    path: Some("controller".into()),
                    line: None,
                    column: None,
                })
            })?;
            let div = detect_divergence(&trace, &ratio(1, 2), &ratio(1, 1));
            let mut summary = trace.summary_json(div.as_ref());
            summary["csv"] = json!(format!("trace-{}.csv", tag(spec)));
            Ok((spec, trace.to_csv(), summary))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut files: Vec<(String, String)> = rows
        .iter()
        .map(|(s, csv, _)| (format!("trace-{}.csv", tag(*s)), csv.clone()))
        .collect();
    let mut report = run.header("simulate");
    report.insert("rows".into(), Value::Array(rows.iter().map(|r| r.2.clone()).collect()));
    files.push(("summary.json".into(), pretty(&Value::Object(report))));
    run.write_outputs(&files)?;
    for (s, _, v) in &rows {
        run.say(format!(
            "{s}  overflows={}  divergence={}  z_max={}  max|y|={}",
            v["total_overflows"],
            v["divergence_time"].as_str().unwrap_or("none"),
            v["z_max"].as_str().unwrap_or("?"),
            v["max_abs_y"].as_str().unwrap_or("?"),
        ));
    }
    Ok(0)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let path = cli
            .config
            .clone()
            .ok_or_else(|| Failure::Usage("--config is required".into()))?;
        let (cfg, hash) = load(&path)?;
        let command = match cli.command {
            Command::Analyze => analyze,
            Command::Certify => certify_cmd,
            Command::Simulate => simulate,
        };
        command(&Run { cli, cfg, hash })
    })();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fxguard: {e}");
            ExitCode::from(e.code())
        }
    }
}
