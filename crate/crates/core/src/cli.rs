//! Command-line front end: configuration ingestion, subcommand dispatch and
//! artifact emission.
//!
//! Exit codes: 0 success, 1 validation error, 2 solver error, 3 a
//! verification gate failed. Failures print one line on standard error,
//! `ERROR <code> <module>::<op> <message>`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Error;
use crate::fixedpoint::{
    solve_fully_nonlinear_spatial, solve_fully_nonlinear_temporal, solve_quasilinear_fixedpoint, FixedPointConfig,
};
use crate::grid::{build_grid, nltf, TriangleField, TriangleGrid};
use crate::holder::{norm_parabolic, norm_triangle};
use crate::linsolve::{schauder_ratio, solve_nonlocal_linear, SchemeConfig, SchemeKind};
use crate::quasilin::{check_equivalence, check_exchange_symmetry, quasilinearize_spatial};
use crate::systems::{
    check_assumption, check_ellipticity, make_preset, preset_info, ExpressionProblem, Problem, QuasilinearSystemSpec,
    SamplePlan,
};
use crate::verify::{compare_fields, convergence_study, forcing_residual, mms_forcing, solve_route, ManufacturedSolution, Route};

// ----- configuration -----

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub fixedpoint: FixedPointSection,
    #[serde(default)]
    pub output: OutputConfig,
    pub mms: Option<MmsConfig>,
    pub norms: Option<NormsConfig>,
    pub convergence: Option<ConvergenceConfig>,
    pub ellipticity: Option<EllipticityConfig>,
    pub equivalence: Option<EquivalenceConfig>,
}

/// Either `preset = "<name>"` or an inline `kind` with `expressions`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub preset: Option<String>,
    pub kind: Option<String>,
    pub name: Option<String>,
    #[serde(default)]
    pub expressions: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T", default = "one")]
    pub t_final: f64,
    #[serde(default = "default_n_tau")]
    pub n_tau: usize,
    #[serde(rename = "L", default = "two_pi")]
    pub box_len: f64,
    #[serde(default = "default_n_y")]
    pub n_y: usize,
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub m: Option<usize>,
}

fn one() -> f64 {
    1.0
}
fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_n_tau() -> usize {
    64
}
fn default_n_y() -> usize {
    32
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            t_final: 1.0,
            n_tau: 64,
            box_len: two_pi(),
            n_y: 32,
            d: None,
            r: None,
            m: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
}

fn default_kind() -> String {
    "explicit".into()
}
fn default_safety() -> f64 {
    0.9
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            kind: default_kind(),
            cfl_safety: default_safety(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub target_ratio: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> PathBuf {
    "out".into()
}
fn default_formats() -> Vec<String> {
    vec!["nltf".into(), "json".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

/// Exact solution: `exact = "sine_product"` or expressions `u`, `u_s`,
/// `u_t` with a `derivatives` table keyed by index labels.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    pub exact: Option<String>,
    pub u: Option<String>,
    pub u_s: Option<String>,
    pub u_t: Option<String>,
    #[serde(default)]
    pub derivatives: BTreeMap<String, String>,
    /// Add the manufactured forcing to the problem (default: only when the
    /// problem is not already a forced catalog problem).
    pub force: Option<bool>,
    pub route: Option<String>,
    /// Sup-error gate; default `10·(Δτ + Δy²)·‖u*‖∞`.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub field: Option<PathBuf>,
    #[serde(default)]
    pub l: Vec<f64>,
    #[serde(default)]
    pub t_derivative: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// `[n_tau, n_y]` pairs, coarse to fine.
    pub grids: Vec<[usize; 2]>,
    pub route: Option<String>,
    pub expected_spatial: Option<f64>,
    pub expected_temporal: Option<f64>,
    pub band: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticityConfig {
    pub lambda: Option<f64>,
    pub node_stride: Option<usize>,
    pub seed: Option<u64>,
    /// Also run the sampled check of the regularity assumption.
    #[serde(default)]
    pub assumption: bool,
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceConfig {
    /// Solve once more with `n_y` doubled and `n_tau` quadrupled.
    pub refine: Option<bool>,
    pub min_factor: Option<f64>,
}

// ----- command line -----

#[derive(Parser, Debug)]
#[command(name = "nonlocal", version, about = "Solvers for nonlocal parabolic systems on the triangle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration entry, e.g. `grid.n_tau=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads; 1 forces the serial mode.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Variant {
    Spatial,
    Temporal,
}

#[derive(Subcommand, Debug)]
enum Command {
    SolveLinear(Common),
    SolveQuasilinear(Common),
    SolveFullnl {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "spatial")]
        variant: Variant,
    },
    Quasilinearize(Common),
    Norms {
        #[command(flatten)]
        common: Common,
        /// NLTF file; overrides `norms.field`.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    VerifyMms(Common),
    CheckEquivalence(Common),
    Convergence(Common),
    CheckEllipticity(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SolveLinear(c)
            | Command::SolveQuasilinear(c)
            | Command::Quasilinearize(c)
            | Command::VerifyMms(c)
            | Command::CheckEquivalence(c)
            | Command::Convergence(c)
            | Command::CheckEllipticity(c) => c,
            Command::SolveFullnl { common, .. } | Command::Norms { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::SolveLinear(_) => "solve-linear",
            Command::SolveQuasilinear(_) => "solve-quasilinear",
            Command::SolveFullnl { .. } => "solve-fullnl",
            Command::Quasilinearize(_) => "quasilinearize",
            Command::Norms { .. } => "norms",
            Command::VerifyMms(_) => "verify-mms",
            Command::CheckEquivalence(_) => "check-equivalence",
            Command::Convergence(_) => "convergence",
            Command::CheckEllipticity(_) => "check-ellipticity",
        }
    }
}

// ----- failures -----

/// A failure tagged with the operation that raised it.
#[derive(Debug)]
pub struct Failure {
    pub code: String,
    pub op: String,
    pub message: String,
    pub exit: i32,
}

impl Failure {
    fn gate(op: &str, message: String) -> Self {
        Failure {
            code: "GateFailed".into(),
            op: op.into(),
            message,
            exit: 3,
        }
    }

    pub fn line(&self) -> String {
        format!("ERROR {} {} {}", self.code, self.op, self.message.replace('\n', " "))
    }
}

/// Exit code class of a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CflViolation { .. }
        | Error::NonFiniteDetected { .. }
        | Error::BallExit { .. }
        | Error::MaxIterExceeded(_)
        | Error::EvaluatorFailure(_)
        | Error::Domain { .. }
        | Error::DivisionByZero(_) => 2,
        Error::SelfCheckFailed(_) => 3,
        _ => 1,
    }
}

trait Tag<T> {
    fn at(self, op: &str) -> std::result::Result<T, Failure>;
}

impl<T> Tag<T> for crate::Result<T> {
    fn at(self, op: &str) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure {
            code: e.code().into(),
            op: op.into(),
            message: e.to_string(),
            exit: exit_code(&e),
        })
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config_error(op: &str, message: String) -> Failure {
    Failure {
        code: "ConfigError".into(),
        op: op.into(),
        message,
        exit: 1,
    }
}

// ----- loading -----

/// Reads a configuration file and applies `key=value` overrides. Values
/// are parsed as TOML scalars or arrays, falling back to strings;
/// expression entries always stay strings.
pub fn load_config(path: &Path, sets: &[String]) -> crate::Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, sets)
}

pub fn parse_config(text: &str, sets: &[String]) -> crate::Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override \"{s}\" is not key=value")))?;
        let path = split_key(key.trim());
        let textual = matches!(
            path.iter().map(String::as_str).collect::<Vec<_>>().as_slice(),
            ["problem", "expressions", _] | ["mms", "derivatives", _] | ["mms", "u" | "u_s" | "u_t", ..]
        );
        let value = if textual {
            toml::Value::String(raw.trim().to_string())
        } else {
            parse_value(raw.trim())
        };
        set_path(&mut table, &path, value)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    Ok(cfg)
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// `problem.expressions.A.q11` keeps `A.q11` as one key.
fn split_key(key: &str) -> Vec<String> {
    let parts: Vec<&str> = key.split('.').collect();
    let tail_from = match parts.as_slice() {
        ["problem", "expressions", ..] | ["mms", "derivatives", ..] => 2,
        _ => parts.len(),
    };
    let mut out: Vec<String> = parts[..tail_from.min(parts.len())].iter().map(|s| s.to_string()).collect();
    if tail_from < parts.len() {
        out.push(parts[tail_from..].join("."));
    }
    out
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> crate::Result<()> {
    let (last, head) = path.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in head {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses the non-table key \"{p}\"")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// The problem named by the configuration.
pub fn build_problem(cfg: &RunConfig) -> crate::Result<Problem> {
    let p = &cfg.problem;
    match (&p.preset, &p.kind) {
        (Some(name), None) => {
            if !p.expressions.is_empty() {
                return Err(Error::Config("presets take no expressions".into()));
            }
            make_preset(name)
        }
        (None, Some(kind)) => {
            let d = cfg.grid.d.unwrap_or(1);
            let r = cfg.grid.r.unwrap_or(1);
            if cfg.grid.m.is_some_and(|m| m != 1) {
                return Err(Error::UnsupportedMultiComponent(cfg.grid.m.unwrap_or(1)));
            }
            let mut e = ExpressionProblem::new(p.name.as_deref().unwrap_or("inline"), kind, d, r);
            for (k, v) in &p.expressions {
                e = e.with(k, v);
            }
            e.build()
        }
        (Some(_), Some(_)) => Err(Error::Config("give either problem.preset or problem.kind, not both".into())),
        (None, None) => Err(Error::Config("problem.preset or problem.kind is required".into())),
    }
}

/// Grid for a problem; `(d, r, m)` default to the problem's shape.
pub fn build_problem_grid(cfg: &GridConfig, problem: &Problem) -> crate::Result<TriangleGrid> {
    let (d, r, m) = problem.shape();
    for (name, given, want) in [("d", cfg.d, d), ("r", cfg.r, r), ("m", cfg.m, m)] {
        if let Some(g) = given {
            if g != want {
                return Err(Error::GridMismatch(format!("grid.{name} = {g} but the problem has {name} = {want}")));
            }
        }
    }
    build_grid(cfg.t_final, cfg.n_tau, cfg.box_len, cfg.n_y, d, r, m)
}

pub fn scheme_config(s: &SchemeSection, parallel: bool) -> crate::Result<SchemeConfig> {
    let kind: SchemeKind = s.kind.parse()?;
    let base = match kind {
        SchemeKind::Explicit => SchemeConfig::explicit(),
        SchemeKind::Imex => SchemeConfig::imex(),
    };
    if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
        return Err(Error::Config(format!("scheme.cfl_safety must lie in (0, 1], got {}", s.cfl_safety)));
    }
    Ok(base.with_safety(s.cfl_safety).parallel(parallel))
}

pub fn fixedpoint_config(s: &FixedPointSection) -> crate::Result<FixedPointConfig> {
    let mut c = FixedPointConfig::default();
    if let Some(v) = s.tol {
        c.tol = v;
    }
    if let Some(v) = s.max_iter {
        c.max_iter = v;
    }
    if let Some(v) = s.target_ratio {
        c.target_ratio = v;
    }
    c.validate()?;
    Ok(c)
}

fn manufactured(cfg: &RunConfig, problem: &Problem) -> crate::Result<(ManufacturedSolution, bool)> {
    let (d, r, _) = problem.shape();
    let preset_exact = match &cfg.problem.preset {
        Some(name) => preset_info(name)?.exact.is_some(),
        None => false,
    };
    let mms = cfg.mms.clone().unwrap_or_default();
    let ms = match (&mms.exact, &mms.u) {
        (Some(name), None) if name == "sine_product" => ManufacturedSolution::sine_product(r)?,
        (Some(name), None) => return Err(Error::Config(format!("unknown builtin exact solution \"{name}\""))),
        (None, Some(u)) => {
            let need = |v: &Option<String>, what: &str| {
                v.clone().ok_or_else(|| Error::Config(format!("mms.{what} is required with mms.u")))
            };
            let (us, ut) = (need(&mms.u_s, "u_s")?, need(&mms.u_t, "u_t")?);
            let ds: Vec<(&str, &str)> = mms.derivatives.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            ManufacturedSolution::new(d, r, u, &us, &ut, &ds)?
        }
        (None, None) if preset_exact => ManufacturedSolution::sine_product(r)?,
        (None, None) => return Err(Error::Config("verification needs an [mms] exact solution".into())),
        (Some(_), Some(_)) => return Err(Error::Config("give either mms.exact or mms.u, not both".into())),
    };
    Ok((ms, mms.force.unwrap_or(!preset_exact)))
}

fn default_route(problem: &Problem) -> Route {
    match problem {
        Problem::Linear(_) => Route::Linear,
        Problem::Quasilinear(_) => Route::Quasilinear,
        Problem::FullyNonlinear(_) => Route::Spatial,
    }
}

// ----- output -----

struct Output {
    dir: PathBuf,
    formats: Vec<String>,
}

impl Output {
    fn new(cfg: &OutputConfig) -> crate::Result<Self> {
        for f in &cfg.formats {
            if !matches!(f.as_str(), "csv" | "nltf" | "json") {
                return Err(Error::Config(format!("unknown output format \"{f}\" (csv, nltf, json)")));
            }
        }
        fs::create_dir_all(&cfg.dir).map_err(|e| Error::Io(format!("{}: {e}", cfg.dir.display())))?;
        Ok(Output {
            dir: cfg.dir.clone(),
            formats: cfg.formats.clone(),
        })
    }

    fn wants(&self, f: &str) -> bool {
        self.formats.iter().any(|x| x == f)
    }

    fn field(&self, name: &str, field: &TriangleField, problem: &str) -> crate::Result<()> {
        if self.wants("nltf") {
            nltf::save(&self.dir.join(format!("{name}.nltf")), field, problem)?;
        }
        if self.wants("csv") {
            let sub = if name == "field" { "slices".to_string() } else { format!("{name}_slices") };
            write_slices(&self.dir.join(sub), field)?;
        }
        Ok(())
    }

    /// `report.json` is always written.
    fn report(&self, report: &Value) -> crate::Result<()> {
        let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.dir.join("report.json"), text + "\n")?;
        Ok(())
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV per `t`-slice: columns `s, y1[, y2], u0, u1, ...`.
pub fn write_slices(dir: &Path, field: &TriangleField) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    let g = *field.grid();
    let width = g.n_tau().to_string().len();
    for i in 0..=g.n_tau() {
        let mut out = String::from("s");
        for k in 0..g.d() {
            let _ = write!(out, ",y{}", k + 1);
        }
        for a in 0..g.m() {
            let _ = write!(out, ",u{a}");
        }
        out.push('\n');
        for j in 0..=i {
            let slice = field.slice(i, j);
            for k in 0..g.n_space() {
                out.push_str(&fmt17(g.s(j)));
                let y = g.y(k);
                for v in &y[..g.d()] {
                    out.push(',');
                    out.push_str(&fmt17(*v));
                }
                for a in 0..g.m() {
                    out.push(',');
                    out.push_str(&fmt17(slice[k * g.m() + a]));
                }
                out.push('\n');
            }
        }
        fs::write(dir.join(format!("t_{i:0width$}.csv")), out)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn grid_json(g: &TriangleGrid) -> Value {
    json!({
        "T": g.t_final(), "n_tau": g.n_tau(), "L": g.box_len(), "n_y": g.n_y(),
        "d": g.d(), "r": g.r(), "m": g.m(), "dtau": g.dtau(), "dy": g.dy(),
    })
}

#[derive(Serialize)]
struct Gate {
    name: String,
    value: f64,
    threshold: f64,
    passed: bool,
}

fn gate(name: &str, value: f64, threshold: f64) -> Gate {
    Gate {
        name: name.into(),
        value,
        threshold,
        passed: value <= threshold,
    }
}

fn finish_gates(op: &str, gates: &[Gate]) -> Outcome<()> {
    let failed: Vec<String> = gates
        .iter()
        .filter(|g| !g.passed)
        .map(|g| format!("{} = {:e} exceeds {:e}", g.name, g.value, g.threshold))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::gate(op, failed.join("; ")))
    }
}

// ----- dispatch -----

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ERROR UsageError cli::run {first}");
            return 1;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.exit
        }
    }
}

fn dispatch(cmd: &Command) -> Outcome<()> {
    let common = cmd.common();
    let cfg = load_config(&common.config, &common.sets).at("cli::load_config")?;
    let parallel = match common.threads {
        Some(0) => return Err(config_error("cli::run", "--threads must be positive".into())),
        Some(1) => false,
        Some(n) => {
            // only the first configuration of the global pool wins
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            true
        }
        None => true,
    };
    let problem = build_problem(&cfg).at("systems::build_problem")?;
    let scheme = scheme_config(&cfg.scheme, parallel).at("cli::scheme_config")?;
    let fp = fixedpoint_config(&cfg.fixedpoint).at("cli::fixedpoint_config")?;
    let out = Output::new(&cfg.output).at("cli::output")?;
    let ctx = Ctx {
        cfg: &cfg,
        problem,
        scheme,
        fp,
        out,
        command: cmd.name(),
    };
    match cmd {
        Command::SolveLinear(_) => ctx.solve_linear(),
        Command::SolveQuasilinear(_) => ctx.solve_quasilinear(),
        Command::SolveFullnl { variant, .. } => ctx.solve_fullnl(*variant),
        Command::Quasilinearize(_) => ctx.quasilinearize(),
        Command::Norms { field, .. } => ctx.norms(field.as_deref()),
        Command::VerifyMms(_) => ctx.verify_mms(),
        Command::CheckEquivalence(_) => ctx.check_equivalence(),
        Command::Convergence(_) => ctx.convergence(),
        Command::CheckEllipticity(_) => ctx.check_ellipticity(),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    problem: Problem,
    scheme: SchemeConfig,
    fp: FixedPointConfig,
    out: Output,
    command: &'static str,
}

impl Ctx<'_> {
    fn grid(&self) -> Outcome<TriangleGrid> {
        build_problem_grid(&self.cfg.grid, &self.problem).at("grid::build_grid")
    }

    fn header(&self, grid: &TriangleGrid) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(self.command));
        m.insert("problem".into(), json!(self.problem.name()));
        m.insert("kind".into(), json!(self.problem.kind()));
        m.insert("grid".into(), grid_json(grid));
        m.insert(
            "scheme".into(),
            json!({"kind": self.scheme.kind.name(), "cfl_safety": self.scheme.cfl_safety, "parallel": self.scheme.parallel}),
        );
        m
    }

    fn emit(&self, mut head: serde_json::Map<String, Value>, extra: Value) -> Outcome<()> {
        if let Value::Object(o) = extra {
            head.extend(o);
        }
        self.out.report(&Value::Object(head)).at("cli::write_report")
    }

    fn solve_linear(&self) -> Outcome<()> {
        let spec = self.problem.clone().into_linear().at("cli::solve_linear")?;
        let grid = self.grid()?;
        let (u, report) = solve_nonlocal_linear(&spec, &grid, &self.scheme).at("linsolve::solve_nonlocal_linear")?;
        self.out.field("field", &u, &spec.name).at("cli::write_field")?;
        let schauder = schauder_ratio(&u, &spec, 2.5).ok();
        let mut r = to_json(&report);
        r["schauder_ratio"] = json!(schauder);
        self.emit(self.header(&grid), json!({ "report": r }))
    }

    fn solve_quasilinear(&self) -> Outcome<()> {
        let spec = match &self.problem {
            Problem::Linear(l) => QuasilinearSystemSpec::from_linear(l).at("systems::from_linear")?,
            other => other.clone().into_quasilinear().at("cli::solve_quasilinear")?,
        };
        let grid = self.grid()?;
        let t0 = Instant::now();
        let (u, report) =
            solve_quasilinear_fixedpoint(&spec, &grid, &self.scheme, &self.fp).at("fixedpoint::solve_quasilinear_fixedpoint")?;
        self.out.field("field", &u, &spec.name).at("cli::write_field")?;
        self.emit(
            self.header(&grid),
            json!({ "report": to_json(&report), "wall_time_s": t0.elapsed().as_secs_f64() }),
        )
    }

    fn solve_fullnl(&self, variant: Variant) -> Outcome<()> {
        let spec = self.problem.clone().into_fully_nonlinear().at("cli::solve_fullnl")?;
        let grid = self.grid()?;
        let t0 = Instant::now();
        let (u, report, induced) = match variant {
            Variant::Spatial => {
                let s = solve_fully_nonlinear_spatial(&spec, &grid, &self.scheme, &self.fp)
                    .at("fixedpoint::solve_fully_nonlinear_spatial")?;
                (s.u(), s.report.clone(), Some(s.field))
            }
            Variant::Temporal => {
                let (u, r) = solve_fully_nonlinear_temporal(&spec, &grid, &self.scheme, &self.fp)
                    .at("fixedpoint::solve_fully_nonlinear_temporal")?;
                (u, r, None)
            }
        };
        self.out.field("field", &u, &spec.name).at("cli::write_field")?;
        if let Some(f) = &induced {
            self.out.field("induced", f, &format!("{}_induced", spec.name)).at("cli::write_field")?;
        }
        let v = match variant {
            Variant::Spatial => "spatial",
            Variant::Temporal => "temporal",
        };
        self.emit(
            self.header(&grid),
            json!({ "variant": v, "report": to_json(&report), "wall_time_s": t0.elapsed().as_secs_f64() }),
        )
    }

    fn quasilinearize(&self) -> Outcome<()> {
        let spec = self.problem.clone().into_fully_nonlinear().at("cli::quasilinearize")?;
        let induced = quasilinearize_spatial(&spec).at("quasilin::quasilinearize_spatial")?;
        let sk = induced.skeleton().at("quasilin::skeleton")?;
        let mut head = serde_json::Map::new();
        head.insert("command".into(), json!(self.command));
        head.insert("problem".into(), json!(spec.name));
        head.insert("induced".into(), to_json(&sk));
        self.out.report(&Value::Object(head)).at("cli::write_report")?;
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&sk).unwrap_or_default());
        Ok(())
    }

    fn norms(&self, flag: Option<&Path>) -> Outcome<()> {
        let nc = self.cfg.norms.clone().unwrap_or_default();
        let ls = if nc.l.is_empty() { vec![2.5] } else { nc.l.clone() };
        let (field, source) = match flag.map(Path::to_path_buf).or(nc.field.clone()) {
            Some(p) => {
                let (f, meta) = nltf::load(&p).at("grid::load")?;
                (f, meta.problem)
            }
            None => {
                let spec = self.problem.clone().into_linear().at("cli::norms")?;
                let grid = self.grid()?;
                (solve_nonlocal_linear(&spec, &grid, &self.scheme).at("linsolve::solve_nonlocal_linear")?.0, spec.name)
            }
        };
        let g = *field.grid();
        let mut rows = Vec::new();
        for &l in &ls {
            let tri = norm_triangle(&field, l, nc.t_derivative).at("holder::norm_triangle")?;
            let mut last = Vec::new();
            for a in 0..g.m() {
                last.push(to_json(&norm_parabolic(&field, g.n_tau(), a, l).at("holder::norm_parabolic")?));
            }
            rows.push(json!({ "l": l, "triangle": tri, "t_derivative": nc.t_derivative, "final_slice": last }));
        }
        let mut head = self.header(&g);
        head.insert("problem".into(), json!(source));
        self.emit(head, json!({ "norms": rows }))
    }

    fn verify_mms(&self) -> Outcome<()> {
        let (ms, force) = manufactured(self.cfg, &self.problem).at("verify::manufactured_solution")?;
        let forced = if force {
            mms_forcing(&ms, &self.problem).at("verify::mms_forcing")?
        } else {
            self.problem.clone()
        };
        let mms = self.cfg.mms.clone().unwrap_or_default();
        let route = match &mms.route {
            Some(r) => r.parse().at("cli::verify_mms")?,
            None => default_route(&forced),
        };
        let grid = self.grid()?;
        let scalar = grid.with_components(1);
        let continuum = forcing_residual(&ms, &forced).at("verify::forcing_residual")?;
        let t0 = Instant::now();
        let u = solve_route(&forced, &scalar, route, &self.scheme, &self.fp).at("verify::solve_route")?;
        let exact = ms.sample(u.grid()).at("verify::sample")?;
        let diff = compare_fields(&u, &exact).at("verify::compare_fields")?;
        let scale = exact.sup_norm().max(1.0);
        let tol = mms.tolerance.unwrap_or(10.0 * (grid.dtau() + grid.dy() * grid.dy()) * scale);
        let gates = vec![
            gate("forcing_residual", continuum, crate::verify::FORCING_CHECK_TOL),
            gate("sup_error", diff.sup_diff, tol),
        ];
        self.out.field("field", &u, forced.name()).at("cli::write_field")?;
        self.emit(
            self.header(&scalar),
            json!({
                "exact": ms.source(), "forced": force, "route": to_json(&route),
                "error": to_json(&diff), "gates": to_json(&gates),
                "wall_time_s": t0.elapsed().as_secs_f64(),
            }),
        )?;
        finish_gates("verify::verify_mms", &gates)
    }

    fn check_equivalence(&self) -> Outcome<()> {
        let spec = self.problem.clone().into_fully_nonlinear().at("cli::check_equivalence")?;
        let ec = self.cfg.equivalence.clone().unwrap_or_default();
        let grid = self.grid()?;
        let mut grids = vec![grid];
        if ec.refine.unwrap_or(true) {
            let p = self.cfg.grid.clone();
            let fine = GridConfig {
                n_tau: p.n_tau * 4,
                n_y: p.n_y * 2,
                ..p
            };
            grids.push(build_problem_grid(&fine, &self.problem).at("grid::build_grid")?);
        }
        let mut levels = Vec::new();
        for g in &grids {
            let s = solve_fully_nonlinear_spatial(&spec, g, &self.scheme, &self.fp)
                .at("fixedpoint::solve_fully_nonlinear_spatial")?;
            let v = s.gradients();
            let eq = check_equivalence(&s.u(), &v, &spec).at("quasilin::check_equivalence")?;
            let ex = check_exchange_symmetry(&v).at("quasilin::check_exchange_symmetry")?;
            levels.push((eq, ex, s.report.iterations));
        }
        let mut gates = Vec::new();
        if levels.len() == 2 {
            let min = ec.min_factor.unwrap_or(3.0);
            let (a, b) = (&levels[0], &levels[1]);
            // gate on the reciprocal shrink factor so that lower is better
            let mut shrink = |name: &str, coarse: f64, fine: f64| {
                if coarse > 0.0 {
                    gates.push(gate(name, fine / coarse, 1.0 / min));
                }
            };
            shrink("grad_residual_ratio", a.0.grad_residual, b.0.grad_residual);
            shrink("pde_residual_ratio", a.0.pde_residual, b.0.pde_residual);
            if spec.d() > 1 {
                shrink("exchange_symmetry_ratio", a.1, b.1);
            }
        }
        let rows: Vec<Value> = grids
            .iter()
            .zip(&levels)
            .map(|(g, (eq, ex, it))| json!({ "grid": grid_json(g), "equivalence": to_json(eq), "exchange_symmetry": ex, "iterations": it }))
            .collect();
        self.emit(self.header(&grids[0]), json!({ "levels": rows, "gates": to_json(&gates) }))?;
        finish_gates("quasilin::check_equivalence", &gates)
    }

    fn convergence(&self) -> Outcome<()> {
        let cc = self
            .cfg
            .convergence
            .clone()
            .ok_or_else(|| config_error("cli::convergence", "a [convergence] section is required".into()))?;
        let (ms, force) = manufactured(self.cfg, &self.problem).at("verify::manufactured_solution")?;
        let forced = if force {
            mms_forcing(&ms, &self.problem).at("verify::mms_forcing")?
        } else {
            self.problem.clone()
        };
        let route = match &cc.route {
            Some(r) => r.parse().at("cli::convergence")?,
            None => default_route(&forced),
        };
        let mut grids = Vec::new();
        for &[n_tau, n_y] in &cc.grids {
            let gc = GridConfig {
                n_tau,
                n_y,
                ..self.cfg.grid.clone()
            };
            grids.push(build_problem_grid(&gc, &forced).at("grid::build_grid")?.with_components(1));
        }
        let res = convergence_study(&forced, &ms, &grids, route, &self.scheme, &self.fp).at("verify::convergence_study")?;
        let band = cc.band.unwrap_or(0.3);
        let mut gates = Vec::new();
        if let Some(p) = cc.expected_spatial.or(Some(2.0)) {
            gates.push(gate("spatial_order_deviation", (res.spatial.order - p).abs(), band));
        }
        if let Some(p) = cc.expected_temporal {
            gates.push(gate("temporal_order_deviation", (res.temporal.order - p).abs(), band));
        }
        let scalar = grids[0];
        self.emit(self.header(&scalar), json!({ "study": to_json(&res), "gates": to_json(&gates) }))?;
        finish_gates("verify::convergence_study", &gates)
    }

    fn check_ellipticity(&self) -> Outcome<()> {
        let ec = self.cfg.ellipticity.clone().unwrap_or_default();
        let grid = self.grid()?;
        let mut plan = SamplePlan::new(&grid);
        if let Some(s) = ec.node_stride {
            plan = plan.with_node_stride(s);
        }
        if let Some(seed) = ec.seed {
            plan.seed = seed;
        }
        // without a target any positive constant will do
        let lambda = ec.lambda.unwrap_or(f64::MIN_POSITIVE);
        let report = check_ellipticity(&self.problem, &plan, lambda).at("systems::check_ellipticity")?;
        let mut extra = json!({ "lambda_target": lambda, "ellipticity": to_json(&report) });
        if ec.assumption {
            let a = check_assumption(&self.problem, None, ec.radius.unwrap_or(1.0), &grid).at("systems::check_assumption")?;
            extra["assumption"] = to_json(&a);
        }
        self.emit(self.header(&grid), extra)?;
        if report.passed {
            Ok(())
        } else {
            let w = report
                .worst_case
                .as_ref()
                .map(|w| format!(" (worst ratio {:e} at t = {}, s = {}, {} condition)", w.ratio, w.t, w.s, w.condition))
                .unwrap_or_default();
            Err(Failure::gate(
                "systems::check_ellipticity",
                match ec.lambda {
                    Some(l) => format!("estimated λ = {:e} is below the target {l:e}{w}", report.lambda_est),
                    None => format!("not uniformly elliptic, estimated λ = {:e}{w}", report.lambda_est),
                },
            ))
        }
    }
}
