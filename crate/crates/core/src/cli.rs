//! Batch front end: one subcommand per verification scenario, JSON
//! configuration, seeded runs and CSV/JSON tables.
//!
//! Every output embeds the resolved [`RunConfig`] (without the output
//! path); feeding it back through `--config` reproduces the file.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_eval_with, schur_constant, KernelSpec, Profile};
use crate::mc::{configure_threads, derive_seed, joint_z, Execution, McOptions};
use crate::potentials::{theta_closed_form, theta_upper_bound, ConvolutionSpec, EmbeddingIndices, ReductionSpec};
use crate::quadrature::{delta3_reduced_at, theta_oracle, Delta3Params};
use crate::verify::{
    dual_check, log_grid, reduction_check, sup_scan, Evaluator, ScanReport, ScanSettings, TestFunction, Verdict,
    DUAL_DILATIONS,
};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "HSCONV_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Theta,
    Delta3,
    SurfaceMc,
    SupScan,
    ReduceCheck,
    Kernel,
    Schur,
    DualCheck,
    Km,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Tau,
    #[default]
    Zero,
    Phi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EvaluatorArg {
    ClosedForm,
    Quadrature,
    Mc,
}

impl From<EvaluatorArg> for Evaluator {
    fn from(e: EvaluatorArg) -> Self {
        match e {
            EvaluatorArg::ClosedForm => Evaluator::ClosedForm,
            EvaluatorArg::Quadrature => Evaluator::Quadrature,
            EvaluatorArg::Mc => Evaluator::Mc,
        }
    }
}

/// Logarithmic grid `lo:hi:count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        log_grid(self.lo, self.hi, self.count)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("grid '{s}' must look like lo:hi:count"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("grid '{s}': {e}"));
        let g = Grid {
            lo: num(lo)?,
            hi: num(hi)?,
            count: count.trim().parse().map_err(|e| format!("grid '{s}': count: {e}"))?,
        };
        if !(g.lo > 0.0 && g.hi >= g.lo && g.hi.is_finite()) || g.count == 0 {
            return Err(format!("grid '{s}' needs 0 < lo <= hi and count >= 1"));
        }
        Ok(g)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}:{:e}:{}", self.lo, self.hi, self.count)
    }
}

impl TryFrom<String> for Grid {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Grid> for String {
    fn from(g: Grid) -> String {
        g.to_string()
    }
}

/// A complete, serializable description of one run.
///
/// Defaults: `n = 3`, `alphas` empty (uniform potentials `n - 1` where the
/// command allows it), `tau = 1`, `w_grid = 1e-3:1e3:25`, `tau_grid =
/// 1:1:1`, `n_samples = 100000`, `seed = 1`, `tol = 1e-10`, evaluator
/// `closed_form`, kernel `zero` with `φ(t) = e^{-t}`, `v_norm = 2`,
/// `p = 2`, `ell = 2`, CSV to stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub m: Option<usize>,
    pub alphas: Vec<f64>,
    pub tau: f64,
    pub w_grid: Grid,
    pub tau_grid: Grid,
    pub n_samples: u64,
    pub seed: u64,
    pub tol: f64,
    pub evaluator: EvaluatorArg,
    pub kernel: KernelKind,
    pub profile: Profile,
    pub v_norm: f64,
    pub p: f64,
    pub ell: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Theta,
            n: 3,
            m: None,
            alphas: Vec::new(),
            tau: 1.0,
            w_grid: Grid {
                lo: 1e-3,
                hi: 1e3,
                count: 25,
            },
            tau_grid: Grid {
                lo: 1.0,
                hi: 1.0,
                count: 1,
            },
            n_samples: 100_000,
            seed: 1,
            tol: 1e-10,
            evaluator: EvaluatorArg::ClosedForm,
            kernel: KernelKind::Zero,
            profile: Profile::default(),
            v_norm: 2.0,
            p: 2.0,
            ell: 2,
            output: None,
            format: Format::Csv,
        }
    }
}

fn field_err<T>(field: &str, msg: impl fmt::Display) -> Result<T> {
    Err(Error::Config(format!("{field}: {msg}")))
}

impl RunConfig {
    /// Parses a config; errors name the offending field.
    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("{path}: {inner}"))
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Field-level checks that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return field_err("n", format!("must be >= 2, got {}", self.n));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return field_err("tau", format!("must be positive and finite, got {}", self.tau));
        }
        if self.n_samples == 0 {
            return field_err("n_samples", "must be positive");
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return field_err("tol", format!("must lie in (0, 1), got {}", self.tol));
        }
        if !(self.v_norm > 0.0) || !self.v_norm.is_finite() {
            return field_err("v_norm", format!("must be positive, got {}", self.v_norm));
        }
        if let Some(m) = self.m {
            if !self.alphas.is_empty() && self.alphas.len() != m {
                return field_err("alphas", format!("has {} entries but m = {m}", self.alphas.len()));
            }
        }
        Ok(())
    }

    /// Explicit exponents, or uniform ones of length `m` (default `m_default`).
    fn spec(&self, m_default: usize) -> Result<ConvolutionSpec> {
        let r = if self.alphas.is_empty() {
            ConvolutionSpec::uniform(self.n, self.m.unwrap_or(m_default), self.tau)
        } else {
            ConvolutionSpec::new(self.n, self.alphas.clone(), self.tau)
        };
        r.map_err(|e| Error::Config(format!("alphas: {e}")))
    }

    fn pair(&self) -> Result<(f64, f64)> {
        match self.alphas[..] {
            [a, l] => Ok((a, l)),
            _ => field_err("alphas", "theta needs exactly [alpha, lambda]"),
        }
    }

    fn settings(&self) -> ScanSettings {
        ScanSettings {
            n_samples: self.n_samples,
            seed: self.seed,
            tol: self.tol,
            execution: Execution::Parallel,
        }
    }

    fn kernel_spec(&self) -> Result<KernelSpec> {
        let m = self.m.unwrap_or(3);
        match self.kernel {
            KernelKind::Tau => KernelSpec::tau(self.n, m, self.tau),
            KernelKind::Zero => KernelSpec::zero(self.n, m),
            KernelKind::Phi => KernelSpec::phi(self.n, m, self.profile),
        }
    }
}

/// A table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // shortest round-trip representation
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(v) => serde_json::json!(v),
            Cell::Int(v) => serde_json::json!(v),
            Cell::Text(s) => serde_json::json!(s),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

/// Result table with an overall verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub passed: bool,
    pub verdict: String,
}

const SCAN_COLUMNS: [&str; 7] = ["w_norm", "tau", "value", "std_error", "closed_form", "upper_bound", "verdict"];

fn scan_table(r: &ScanReport) -> RunResult {
    for v in &r.violations {
        eprintln!("warning: {v}");
    }
    let rows = r
        .grid
        .iter()
        .map(|p| {
            vec![
                p.w_norm.into(),
                p.tau.into(),
                p.value.into(),
                p.std_error.into(),
                p.closed_form.into(),
                p.upper_bound.into(),
                if p.divergence.is_some() { "divergent" } else { "ok" }.into(),
            ]
        })
        .collect();
    let verdict = match &r.verdict {
        Verdict::Bounded => format!("bounded (sup {:e})", r.running_sup),
        Verdict::Unsaturated { sup_all, sup_inner } => {
            format!("unsaturated (sup {sup_all:e}, inner sup {sup_inner:e})")
        }
        Verdict::UnboundedAt { w_norm, tau, reason } => {
            format!("unbounded-at |w|={w_norm:e} tau={tau:e}: {reason}")
        }
    };
    RunResult {
        columns: SCAN_COLUMNS.to_vec(),
        rows,
        passed: r.verdict.passed(),
        verdict,
    }
}

fn first_axis(n: usize, r: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[0] = r;
    w
}

/// Relative gap accepted between the closed form and the oracle.
pub const THETA_GAP: f64 = 1e-6;

/// Rounding allowance where the bound is attained (`|w| = √τ`).
pub const BOUND_SLACK: f64 = 1e-12;

/// Runs the configured command.
pub fn execute(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let n = cfg.n;
    let settings = cfg.settings();
    let opts = McOptions::default();
    match cfg.command {
        Command::Theta => {
            let (a, l) = cfg.pair()?;
            let mut rows = Vec::new();
            let mut passed = true;
            for w in cfg.w_grid.points()? {
                let cf = theta_closed_form(n, a, l, w)?;
                let oracle = theta_oracle(n, a, l, w, cfg.tol)?;
                let ub = theta_upper_bound(n, a, l, w).ok();
                let gap = (cf - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
                let ok = gap <= THETA_GAP && ub.is_none_or(|b| cf <= b * (1.0 + BOUND_SLACK));
                passed &= ok;
                rows.push(vec![
                    w.into(),
                    1.0.into(),
                    oracle.into(),
                    0.0.into(),
                    cf.into(),
                    ub.into(),
                    if ok { "ok" } else { "mismatch" }.into(),
                ]);
            }
            Ok(RunResult {
                columns: SCAN_COLUMNS.to_vec(),
                rows,
                passed,
                verdict: if passed { "closed form matches oracle" } else { "closed form mismatch" }.into(),
            })
        }
        Command::Delta3 => {
            let [a1, a2, lambda] = cfg.alphas[..] else {
                return field_err("alphas", "delta3 needs [alpha_1, alpha_2, lambda]");
            };
            let p = Delta3Params { n, a1, a2, lambda };
            let mut rows = Vec::new();
            for w in cfg.w_grid.points()? {
                let v = delta3_reduced_at(&p, w, cfg.tol)?;
                rows.push(vec![
                    w.into(),
                    1.0.into(),
                    v.into(),
                    0.0.into(),
                    Cell::Empty,
                    Cell::Empty,
                    "ok".into(),
                ]);
            }
            Ok(RunResult {
                columns: SCAN_COLUMNS.to_vec(),
                rows,
                passed: true,
                verdict: "evaluated".into(),
            })
        }
        Command::SurfaceMc => {
            let spec = cfg.spec(3)?;
            let r = sup_scan(&spec, Evaluator::Mc, &cfg.w_grid.points()?, &cfg.tau_grid.points()?, &settings)?;
            let mut t = scan_table(&r);
            t.passed = r.grid.iter().all(|p| p.divergence.is_none());
            t.verdict = if t.passed { "finite" } else { "divergent point" }.into();
            Ok(t)
        }
        Command::SupScan => {
            let spec = cfg.spec(3)?;
            let r = sup_scan(
                &spec,
                cfg.evaluator.into(),
                &cfg.w_grid.points()?,
                &cfg.tau_grid.points()?,
                &settings,
            )?;
            Ok(scan_table(&r))
        }
        Command::Km => {
            let spec = ConvolutionSpec::uniform(n, cfg.m.unwrap_or(3), 1.0)?;
            let r = sup_scan(&spec, Evaluator::Mc, &cfg.w_grid.points()?, &cfg.tau_grid.points()?, &settings)?;
            Ok(scan_table(&r))
        }
        Command::ReduceCheck => {
            let spec = cfg.spec(3)?;
            let red = ReductionSpec::new(&spec, cfg.ell)?;
            let r = reduction_check(&spec, &red, &cfg.w_grid.points()?, &cfg.tau_grid.points()?, &settings)?;
            let rows = r
                .points
                .iter()
                .map(|p| {
                    vec![
                        p.w_norm.into(),
                        1.0.into(),
                        p.lhs.value.into(),
                        p.lhs.std_error.into(),
                        Cell::Empty,
                        p.bound.into(),
                        if p.holds { "holds" } else { "violated" }.into(),
                    ]
                })
                .collect();
            Ok(RunResult {
                columns: SCAN_COLUMNS.to_vec(),
                rows,
                passed: r.holds,
                verdict: format!(
                    "C = {:e}, sup = {:e}, identity residual = {:e}: {}",
                    r.constant,
                    r.rhs_sup,
                    r.exponent_identity_residual,
                    if r.holds { "holds" } else { "violated" }
                ),
            })
        }
        Command::Kernel => {
            let k = cfg.kernel_spec()?;
            let v = {
                let mut v = vec![0.0; n];
                v[1] = cfg.v_norm;
                v
            };
            let mut rows = Vec::new();
            let mut passed = true;
            for (i, r) in cfg.w_grid.points()?.into_iter().enumerate() {
                let w = first_axis(n, r);
                let a = kernel_eval_with(&k, &w, &v, cfg.n_samples, derive_seed(cfg.seed, 2 * i as u64), &opts)?;
                let b = kernel_eval_with(&k, &v, &w, cfg.n_samples, derive_seed(cfg.seed, 2 * i as u64 + 1), &opts)?;
                let z = joint_z(&a, &b);
                let ok = a.value.is_finite() && a.value > 0.0;
                passed &= ok;
                rows.push(vec![
                    r.into(),
                    cfg.v_norm.into(),
                    a.value.into(),
                    a.std_error.into(),
                    b.value.into(),
                    b.std_error.into(),
                    z.into(),
                    if ok { "ok" } else { "invalid" }.into(),
                ]);
            }
            Ok(RunResult {
                columns: vec!["w_norm", "v_norm", "value", "std_error", "swapped", "swapped_std_error", "symmetry_z", "verdict"],
                rows,
                passed,
                verdict: if passed { "finite" } else { "invalid kernel value" }.into(),
            })
        }
        Command::Schur => {
            let k = KernelSpec::zero(n, cfg.m.unwrap_or(3))?;
            let r = schur_constant(&k, cfg.n_samples, cfg.seed, &opts)?;
            let rel = r.value.relative_error();
            let passed = r.value.value.is_finite() && rel <= 0.05;
            Ok(RunResult {
                columns: vec!["value", "std_error", "relative_error", "exponent_at_zero", "exponent_at_infinity", "verdict"],
                rows: vec![vec![
                    r.value.value.into(),
                    r.value.std_error.into(),
                    rel.into(),
                    r.exponent_at_zero.into(),
                    r.exponent_at_infinity.into(),
                    if passed { "finite" } else { "imprecise" }.into(),
                ]],
                passed,
                verdict: format!("A = {:e} ± {:e}", r.value.value, r.value.std_error),
            })
        }
        Command::DualCheck => {
            let idx = EmbeddingIndices::new(cfg.p, (2.0 * (cfg.p - 1.0) / cfg.p).max(1.0))?;
            let g = TestFunction::Gaussian { scale: 1.0 };
            let r = dual_check(n, cfg.m.unwrap_or(3), &idx, &g, &DUAL_DILATIONS, &settings)?;
            let rows = r
                .points
                .iter()
                .map(|p| {
                    vec![
                        p.dilation.into(),
                        p.lhs.value.into(),
                        p.lhs.std_error.into(),
                        p.rhs.into(),
                        p.ratio.into(),
                        p.ratio_std_error.into(),
                    ]
                })
                .collect();
            Ok(RunResult {
                columns: vec!["dilation", "lhs", "lhs_std_error", "rhs", "ratio", "ratio_std_error"],
                rows,
                passed: r.stable,
                verdict: format!(
                    "{}{}",
                    if r.stable { "stable" } else { "unstable" },
                    if r.heavy_tail { " (heavy-tailed weights)" } else { "" }
                ),
            })
        }
    }
}

/// The embedded config: the resolved run without its output path.
fn record_config(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = None;
    c.to_json()
}

/// Renders the result in the configured format.
pub fn render(cfg: &RunConfig, res: &RunResult) -> Result<String> {
    match cfg.format {
        Format::Csv => {
            let mut out = format!("# config: {}\n", record_config(cfg));
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Io(e.to_string());
            w.write_record(&res.columns).map_err(io)?;
            for row in &res.rows {
                w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
            }
            let body = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            out.push_str(&String::from_utf8(body).map_err(|e| Error::Io(e.to_string()))?);
            out.push_str(&format!(
                "# verdict: {} ({})\n",
                if res.passed { "pass" } else { "fail" },
                res.verdict
            ));
            Ok(out)
        }
        Format::Json => {
            let mut c = cfg.clone();
            c.output = None;
            let rows: Vec<Vec<serde_json::Value>> =
                res.rows.iter().map(|r| r.iter().map(Cell::json).collect()).collect();
            let doc = serde_json::json!({
                "config": c,
                "columns": res.columns,
                "rows": rows,
                "passed": res.passed,
                "verdict": res.verdict,
            });
            Ok(serde_json::to_string_pretty(&doc).expect("json renders") + "\n")
        }
    }
}

/// Extracts the embedded config from a CSV or JSON result file.
pub fn embedded_config(text: &str) -> Result<RunConfig> {
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# config: ")) {
        return RunConfig::from_json(line);
    }
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    RunConfig::from_json(&v["config"].to_string())
}

/// Executes, writes the artifact and returns the exit status: 0 when the
/// verdict passes, 2 when it fails.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    let res = execute(cfg)?;
    let text = render(cfg, &res)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(if res.passed { 0 } else { 2 })
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|e| format!("'{s}': {e}"))?;
    if f >= 1.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("'{s}' is not a positive integer"))
    }
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("'{s}' must look like RxC"))?;
    let p = |x: &str| x.parse::<usize>().map_err(|e| format!("'{s}': {e}"));
    Ok((p(a)?, p(b)?))
}

#[derive(Parser, Debug)]
#[command(name = "hsconv", version, about = "Convolution integrals over hyperbolic surfaces")]
struct Cli {
    /// Run the JSON config in this file instead of a subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path for `--config` runs (stdout by default).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Θ_n closed form against the quadrature oracle over a |w| grid.
    Theta(Flags),
    /// Δ_n by reduced quadrature over a |w| grid.
    Delta3(Flags),
    /// Surface Monte Carlo of |w|^ρ Form(w, τ) over a (|w|, τ) grid.
    SurfaceMc(Flags),
    /// Sup-saturation scan with a chosen evaluator.
    SupScan(Flags),
    /// The reduction inequality for m = 3, ℓ = 2.
    ReduceCheck(Flags),
    /// Kernel values K(|w|ê₁, v ê₂) and their swapped counterparts.
    Kernel(Flags),
    /// Schur constant of K_0.
    Schur(Flags),
    /// Dual inequality ratios for a Gaussian test function.
    DualCheck(Flags),
    /// Uniform-potential sup scan by Monte Carlo.
    Km(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Exponent α of the two-fold form.
    #[arg(long)]
    alpha: Option<f64>,
    /// Exponent λ of the distinguished variable.
    #[arg(long)]
    lambda: Option<f64>,
    /// All exponents, comma separated (overrides --alpha/--lambda).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    tau: Option<f64>,
    /// |w| grid lo:hi:count (logarithmic).
    #[arg(long)]
    w_grid: Option<Grid>,
    /// τ grid lo:hi:count (logarithmic).
    #[arg(long)]
    tau_grid: Option<Grid>,
    /// RxC shorthand: R values of |w| and C of τ over 1e-3..1e3.
    #[arg(long, value_parser = parse_shape)]
    grid: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_count)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorArg>,
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    /// Rate of the exponential profile φ(t) = r e^{-rt}.
    #[arg(long)]
    profile_rate: Option<f64>,
    #[arg(long)]
    v_norm: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn resolve(command: Command, f: Flags) -> RunConfig {
    let mut c = RunConfig {
        command,
        ..Default::default()
    };
    if command == Command::Km {
        c.w_grid = Grid {
            lo: 1e-3,
            hi: 1e3,
            count: 3,
        };
        c.tau_grid = c.w_grid;
    }
    if command == Command::ReduceCheck {
        c.w_grid = Grid {
            lo: 0.1,
            hi: 10.0,
            count: 9,
        };
        c.tau_grid = Grid {
            lo: 1e-3,
            hi: 1e3,
            count: 25,
        };
    }
    if let Some(v) = f.n {
        c.n = v;
    }
    c.m = f.m;
    if let Some(a) = f.alphas {
        c.alphas = a;
    } else if let (Some(a), Some(l)) = (f.alpha, f.lambda) {
        c.alphas = vec![a, l];
    }
    if let Some(v) = f.tau {
        c.tau = v;
    }
    if let Some(v) = f.w_grid {
        c.w_grid = v;
    }
    if let Some(v) = f.tau_grid {
        c.tau_grid = v;
    }
    if let Some((r, cc)) = f.grid {
        c.w_grid = Grid {
            lo: 1e-3,
            hi: 1e3,
            count: r,
        };
        c.tau_grid = Grid {
            lo: 1e-3,
            hi: 1e3,
            count: cc,
        };
    }
    if let Some(v) = f.samples {
        c.n_samples = v;
    }
    if let Some(v) = f.seed {
        c.seed = v;
    }
    if let Some(v) = f.tol {
        c.tol = v;
    }
    if let Some(v) = f.evaluator {
        c.evaluator = v;
    }
    if let Some(v) = f.kernel {
        c.kernel = v;
    }
    if let Some(r) = f.profile_rate {
        c.profile = Profile::Exponential { rate: r };
    }
    if let Some(v) = f.v_norm {
        c.v_norm = v;
    }
    if let Some(v) = f.p {
        c.p = v;
    }
    if let Some(v) = f.ell {
        c.ell = v;
    }
    c.output = f.output;
    if let Some(v) = f.format {
        c.format = v;
    }
    c
}

/// Parses arguments into a config.
pub fn parse_args<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    resolve_cli(cli)
}

fn resolve_cli(cli: Cli) -> Result<RunConfig> {
    match (cli.config, cli.command) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path)?;
            let mut c = RunConfig::from_json(&text)?;
            if cli.output.is_some() {
                c.output = cli.output;
            }
            Ok(c)
        }
        (Some(_), Some(_)) => Err(Error::Config("--config cannot be combined with a subcommand".into())),
        (None, None) => Err(Error::Config("a subcommand or --config is required (see --help)".into())),
        (None, Some(sub)) => {
            let (cmd, f) = match sub {
                Sub::Theta(f) => (Command::Theta, f),
                Sub::Delta3(f) => (Command::Delta3, f),
                Sub::SurfaceMc(f) => (Command::SurfaceMc, f),
                Sub::SupScan(f) => (Command::SupScan, f),
                Sub::ReduceCheck(f) => (Command::ReduceCheck, f),
                Sub::Kernel(f) => (Command::Kernel, f),
                Sub::Schur(f) => (Command::Schur, f),
                Sub::DualCheck(f) => (Command::DualCheck, f),
                Sub::Km(f) => (Command::Km, f),
            };
            let mut c = resolve(cmd, f);
            if cli.output.is_some() && c.output.is_none() {
                c.output = cli.output;
            }
            Ok(c)
        }
    }
}

/// Entry point of the `hsconv` binary; returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(t) if t > 0 => configure_threads(t),
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{v}'");
                return 1;
            }
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cfg = match resolve_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
