//! Batch front end: workspace configuration, command dispatch and report files.
//!
//! Every command produces a [`RunReport`]. It is printed to stdout and, when an
//! output directory is known, written to `report.json` next to the CSV and text
//! payloads. Exit codes: 0 success, 1 I/O, 2 configuration or usage, 3 infeasible
//! construction, 4 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cocycle::{cocycle_from_text, cocycle_to_text, parse_float_expr, Cocycle, ValueGroup};
use crate::construct::{certificate_reach, run_construction, ScalePolicy, Schedule, StepConfig};
use crate::error::{Error, Result};
use crate::evc::{essential_value_scan, EvcCertificate};
use crate::lattice::{LatticeVector, LevelBox, NormKind};
use crate::measure_space::{rational_to_string, split_tuples, MeasurableSet, Odometer, ShiftPoint};
use crate::rwlab::{
    decompose_block_cocycle, equidistribution_check, j_action_apply, random_walk_path, recurrence_diagnostic,
    BlockCocycle, BlockFunction, HomomorphismH, TorusLatticePoint,
};
use crate::topo::{build_sequential, verify_transitive_orbit, ShiftSpace, TopoTarget, WindowPattern};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "ERGO_SEED";

/// Exit status for an error, by category.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 1,
        Error::Parse(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
        Error::InfeasibleBreadth { .. } | Error::SearchBudget(_) | Error::NoSolution(_) | Error::Resolution(_) => 3,
        Error::Verification(_) | Error::InconsistentCocycle(_) => 4,
    }
}

fn category(code: i32) -> &'static str {
    match code {
        0 => "ok",
        1 => "io",
        2 => "config",
        3 => "infeasible",
        4 => "verification",
        _ => "other",
    }
}

/// Workspace settings shared by all commands.
///
/// Text form, one `key = value` per line, `#` starts a comment:
///
/// ```text
/// dim = 1
/// base = 2
/// group = kind=lattice; S=[(1)]
/// norm = linf
/// seed = 7
/// depth_limit = 10
/// output = out
/// policy = exact
/// rounds = 2
/// sigmas = [(1),(-1)]
/// sets = depth=1; cells=[(0)] | depth=1; cells=[(1)]
/// ```
///
/// `group` defaults to the signed standard basis of `Z^dim`, `sigmas` to the
/// signed generators and `sets` to the depth-1 cylinders.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkspaceConfig {
    /// The configuration text exactly as read.
    pub text: String,
    pub dim: usize,
    pub base: u32,
    pub group: Option<String>,
    pub norm: NormKind,
    pub seed: u64,
    pub depth_limit: u32,
    pub policy: ScalePolicy,
    pub rounds: usize,
    pub sigmas: Option<String>,
    pub sets: Option<String>,
    pub output: Option<PathBuf>,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            text: String::new(),
            dim: 1,
            base: 2,
            group: None,
            norm: NormKind::Linf,
            seed: 0,
            depth_limit: 10,
            policy: ScalePolicy::Exact,
            rounds: 1,
            sigmas: None,
            sets: None,
            output: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

impl WorkspaceConfig {
    /// Parses and validates a configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = WorkspaceConfig {
            text: text.to_string(),
            ..Default::default()
        };
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "dim" => cfg.dim = parse_num(k, v)?,
                "base" => cfg.base = parse_num(k, v)?,
                "group" => cfg.group = Some(v.to_string()),
                "norm" | "norm_kind" => cfg.norm = v.parse()?,
                "seed" => cfg.seed = parse_num(k, v)?,
                "depth_limit" => cfg.depth_limit = parse_num(k, v)?,
                "output" => cfg.output = Some(PathBuf::from(v)),
                "policy" => cfg.policy = v.parse()?,
                "rounds" => cfg.rounds = parse_num(k, v)?,
                "sigmas" => cfg.sigmas = Some(v.to_string()),
                "sets" => cfg.sets = Some(v.to_string()),
                other => return Err(Error::Parse(format!("line {}: unknown key `{other}`", no + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.odometer()?;
        self.value_group()?;
        self.schedule()?.validate()?;
        if self.depth_limit > self.odometer()?.max_depth() {
            return Err(Error::Parse(format!(
                "depth_limit {} exceeds the odometer's capacity",
                self.depth_limit
            )));
        }
        Ok(())
    }

    pub fn odometer(&self) -> Result<Odometer> {
        Odometer::new(self.dim, self.base).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn value_group(&self) -> Result<ValueGroup> {
        match &self.group {
            Some(t) => ValueGroup::parse_text(t),
            None => Ok(ValueGroup::signed_basis(self.dim)),
        }
    }

    /// Round-robin schedule over the configured values and sets.
    pub fn schedule(&self) -> Result<Schedule> {
        let space = self.odometer()?;
        let group = self.value_group()?;
        let sigmas = match &self.sigmas {
            None => group.generators(),
            Some(t) => {
                let list = t
                    .trim()
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| Error::Parse(format!("bad sigmas `{t}`")))?;
                let tuples = split_tuples(list).ok_or_else(|| Error::Parse(format!("bad sigmas `{t}`")))?;
                tuples
                    .iter()
                    .map(|c| {
                        let coeffs = parse_ints(c)?;
                        if coeffs.len() != group.pairs() {
                            return Err(Error::DimensionMismatch {
                                expected: group.pairs(),
                                got: coeffs.len(),
                            });
                        }
                        Ok(group.value(coeffs))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let sets = match &self.sets {
            None => (0..space.cell_count(1))
                .map(|c| MeasurableSet::from_cells(space, 1, vec![c]))
                .collect(),
            Some(t) => t
                .split('|')
                .map(|s| MeasurableSet::parse_text(space, s))
                .collect::<Result<Vec<_>>>()?,
        };
        if sets.iter().any(|s| s.is_empty()) {
            return Err(Error::Parse("scheduled sets must have positive measure".into()));
        }
        if self.rounds == 0 || sigmas.is_empty() {
            return Err(Error::Parse("schedule is empty".into()));
        }
        Ok(Schedule::round_robin(sigmas, sets, self.rounds))
    }

    /// Settings as used, for the report echo. The output directory is left
    /// out so reports written to different places compare equal.
    pub fn resolved(&self) -> Value {
        let group = self.value_group().map(|g| g.to_text()).unwrap_or_default();
        json!({
            "dim": self.dim,
            "base": self.base,
            "group": group,
            "norm": self.norm.to_string(),
            "seed": self.seed,
            "depth_limit": self.depth_limit,
            "policy": format!("{:?}", self.policy).to_ascii_lowercase(),
            "rounds": self.rounds,
            "sigmas": self.sigmas,
            "sets": self.sets,
        })
    }
}

fn parse_ints(text: &str) -> Result<Vec<i64>> {
    let t = text.trim();
    let t = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')).unwrap_or(t);
    t.split(',')
        .map(|x| {
            x.trim()
                .parse::<i64>()
                .map_err(|_| Error::Parse(format!("bad integer `{x}`")))
        })
        .collect()
}

/// Parses a real number written as a sum of terms such as `sqrt(2)-1`.
pub fn parse_real(text: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("bad number `{text}`"));
    let mut terms = Vec::new();
    let mut cur = String::new();
    let mut depth = 0usize;
    for ch in text.trim().chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.checked_sub(1).ok_or_else(bad)?,
            _ => {}
        }
        let t = cur.trim_end();
        let after_exponent =
            t.ends_with(['e', 'E']) && t[..t.len() - 1].ends_with(|c: char| c.is_ascii_digit() || c == '.');
        if matches!(ch, '+' | '-') && depth == 0 && !t.is_empty() && !after_exponent {
            terms.push(std::mem::take(&mut cur));
        }
        if ch != '+' || !cur.is_empty() {
            cur.push(ch);
        }
    }
    if depth != 0 {
        return Err(bad());
    }
    terms.push(cur);
    terms.iter().map(|t| parse_float_expr(t.trim()).ok_or_else(bad)).sum()
}

fn parse_reals(text: &str) -> Result<Vec<f64>> {
    let t = text.trim();
    let t = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')).unwrap_or(t);
    t.split(',').map(parse_real).collect()
}

/// Parses targets, one per line: `level=2 value=1 eta=0.5` (vector values
/// comma-separated).
pub fn parse_targets(text: &str) -> Result<Vec<TopoTarget>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (mut level, mut value, mut eta) = (None, None, None);
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("targets line {}: bad token `{tok}`", no + 1)))?;
            match k {
                "level" => level = Some(parse_num::<u32>(k, v)?),
                "value" => value = Some(parse_reals(v)?),
                "eta" => eta = Some(parse_real(v)?),
                other => return Err(Error::Parse(format!("targets line {}: unknown key `{other}`", no + 1))),
            }
        }
        match (level, value, eta) {
            (Some(level), Some(value), Some(eta)) => out.push(TopoTarget { level, value, eta }),
            _ => {
                return Err(Error::Parse(format!(
                    "targets line {}: needs level, value and eta",
                    no + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no targets".into()));
    }
    Ok(out)
}

/// A certificate as written to disk, with the cocycle it refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    /// Path of the cocycle text file, relative to the certificate file.
    pub cocycle_file: String,
    pub certificate: EvcCertificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub text: String,
    pub resolved: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub category: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: ConfigEcho,
    pub exit_status: i32,
    pub error: Option<ErrorInfo>,
    pub payload: Value,
    /// Payload files, relative to the output directory.
    pub outputs: Vec<String>,
    /// Wall-clock time; the only field that varies between identical runs.
    pub timing: Timing,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The report with the timing field removed, for reproducibility checks.
    pub fn without_timing(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Value::Object(m) = &mut v {
            m.remove("timing");
        }
        v
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cocyclab",
    version,
    about = "Cocycle construction and verification workbench"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Workspace configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report.json and payload files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override (wins over ERGO_SEED and the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice dimension override.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Odometer base override.
    #[arg(long, global = true)]
    base: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a bounded cocycle with essential-value certificates.
    ConstructMeasurable(MeasurableArgs),
    /// Build a cocycle over a transitive shift point and measure orbit coverage.
    ConstructTopological(TopologicalArgs),
    /// Re-verify an emitted certificate against its cocycle file.
    VerifyEvc(VerifyArgs),
    /// List the shifts that witness a value on a set.
    ScanEssentialValues(ScanArgs),
    /// Random-walk recurrence experiment.
    RwDemo(WalkArgs),
    /// Split a block cocycle into coboundary plus homomorphism.
    Decompose(DecomposeArgs),
    /// Torus-lattice action diagnostics.
    JAction(JActionArgs),
    /// Summarize a cocycle, block table, certificate, report or config file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct MeasurableArgs {
    #[arg(long)]
    policy: Option<ScalePolicy>,
    #[arg(long)]
    depth_limit: Option<u32>,
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Debug)]
struct TopologicalArgs {
    /// Target file, one `level=.. value=.. eta=..` per line.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, default_value_t = 1)]
    valdim: usize,
    /// Search budget per target (L1 radius of candidate shifts).
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 2)]
    alphabet: u32,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Orbit budget for the coverage check (0 skips it).
    #[arg(long, default_value_t = 10_000)]
    coverage_budget: u64,
    #[arg(long, default_value_t = 0.125)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1)]
    window_level: u32,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    certificate: PathBuf,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    cocycle: PathBuf,
    /// Set text `depth=p; cells=[..]` (default: whole space).
    #[arg(long)]
    set: Option<String>,
    /// Coefficients of the value, e.g. `(1,0)` (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    value: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 8)]
    radius: u64,
}

#[derive(Args, Debug)]
struct WalkArgs {
    #[arg(long, default_value_t = 1)]
    valdim: usize,
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    #[arg(long, default_value_t = 4)]
    trials: u32,
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Stay put with probability 1/2.
    #[arg(long)]
    lazy: bool,
    /// Rows in the sampled path CSV.
    #[arg(long, default_value_t = 1000)]
    samples: u64,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Block table file; see `BlockCocycle::to_text`.
    #[arg(long, conflicts_with = "synthesize")]
    input: Option<PathBuf>,
    /// Generate a random coboundary-plus-homomorphism input from the seed.
    #[arg(long)]
    synthesize: bool,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Largest transfer-function depth to try.
    #[arg(long, default_value_t = 3)]
    depth: u32,
    #[arg(long, default_value_t = 1)]
    valdim: usize,
}

#[derive(Args, Debug)]
struct JActionArgs {
    /// Rotation vector, comma-separated; entries may be sums like `sqrt(2)-1`.
    #[arg(long, default_value = "sqrt(2)-1", allow_hyphen_values = true)]
    alpha: String,
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    #[arg(long, default_value_t = 10)]
    cells: usize,
    /// Random points for the commutation check.
    #[arg(long, default_value_t = 10_000)]
    checks: u64,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    file: PathBuf,
}

/// Collects payload files; writes nothing when there is no directory.
struct Sink {
    dir: Option<PathBuf>,
    files: Vec<String>,
}

impl Sink {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), contents)?;
            self.files.push(name.to_string());
        }
        Ok(())
    }
}

/// Clap rejected the command line, or help/version was requested.
#[derive(Debug)]
pub struct UsageExit {
    pub code: i32,
    pub text: String,
}

/// Parses a command line (program name first) and runs it.
pub fn dispatch<I, T>(args: I) -> std::result::Result<RunReport, UsageExit>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| UsageExit {
        code: e.exit_code(),
        text: e.render().to_string(),
    })?;
    let start = Instant::now();
    let name = command_name(&cli.command).to_string();
    let mut cfg_text = String::new();
    let mut resolved = Value::Null;
    let mut sink = Sink {
        dir: None,
        files: Vec::new(),
    };
    let outcome = (|| -> Result<Value> {
        let cfg = resolve_config(&cli.global)?;
        cfg_text = cfg.text.clone();
        resolved = cfg.resolved();
        let wants_dir = !matches!(cli.command, Command::VerifyEvc(_) | Command::Inspect(_));
        sink.dir = cli
            .global
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .or_else(|| wants_dir.then(|| PathBuf::from("cocyclab-out")));
        match cli.global.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
                pool.install(|| run_command(&cli.command, &cfg, &mut sink))
            }
            None => run_command(&cli.command, &cfg, &mut sink),
        }
    })();
    let (exit_status, error, payload) = match outcome {
        Ok(p) => (0, None, p),
        Err(e) => {
            let code = exit_code(&e);
            let info = ErrorInfo {
                category: category(code).to_string(),
                message: e.to_string(),
            };
            (code, Some(info), Value::Null)
        }
    };
    let mut report = RunReport {
        command: name,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: ConfigEcho {
            text: cfg_text,
            resolved,
        },
        exit_status,
        error,
        payload,
        outputs: Vec::new(),
        timing: Timing { elapsed_ms: 0.0 },
    };
    if sink.dir.is_some() {
        report.outputs = sink.files.clone();
        report.outputs.push("report.json".into());
    }
    report.timing.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    if let Some(dir) = &sink.dir {
        let written = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("report.json"), report.to_json()));
        if let Err(e) = written {
            if report.exit_status == 0 {
                report.exit_status = 1;
                report.error = Some(ErrorInfo {
                    category: category(1).into(),
                    message: format!("writing report: {e}"),
                });
            }
        }
    }
    Ok(report)
}

/// Runs a command line, printing the report to stdout and errors to stderr.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match dispatch(args) {
        Err(u) => {
            if u.code == 0 {
                print!("{}", u.text);
            } else {
                eprint!("{}", u.text);
            }
            u.code
        }
        Ok(report) => {
            print!("{}", report.to_json());
            if let Some(e) = &report.error {
                eprintln!("error ({}): {}", e.category, e.message);
            }
            report.exit_status
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::ConstructMeasurable(_) => "construct-measurable",
        Command::ConstructTopological(_) => "construct-topological",
        Command::VerifyEvc(_) => "verify-evc",
        Command::ScanEssentialValues(_) => "scan-essential-values",
        Command::RwDemo(_) => "rw-demo",
        Command::Decompose(_) => "decompose",
        Command::JAction(_) => "j-action",
        Command::Inspect(_) => "inspect",
    }
}

fn resolve_config(g: &GlobalArgs) -> Result<WorkspaceConfig> {
    let mut cfg = match &g.config {
        Some(p) => WorkspaceConfig::load(p)?,
        None => WorkspaceConfig::default(),
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = parse_num(SEED_ENV, s.trim())?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = g.dim {
        cfg.dim = d;
    }
    if let Some(b) = g.base {
        cfg.base = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_command(cmd: &Command, cfg: &WorkspaceConfig, sink: &mut Sink) -> Result<Value> {
    match cmd {
        Command::ConstructMeasurable(a) => construct_measurable(cfg, a, sink),
        Command::ConstructTopological(a) => construct_topological(cfg, a, sink),
        Command::VerifyEvc(a) => verify_evc(a),
        Command::ScanEssentialValues(a) => scan(cfg, a, sink),
        Command::RwDemo(a) => rw_demo(cfg, a, sink),
        Command::Decompose(a) => decompose(cfg, a, sink),
        Command::JAction(a) => j_action(cfg, a, sink),
        Command::Inspect(a) => inspect(a),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

fn construct_measurable(cfg: &WorkspaceConfig, a: &MeasurableArgs, sink: &mut Sink) -> Result<Value> {
    let mut cfg = cfg.clone();
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(l) = a.depth_limit {
        cfg.depth_limit = l;
    }
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    cfg.validate()?;
    let space = cfg.odometer()?;
    let group = cfg.value_group()?;
    let schedule = cfg.schedule()?;
    let step = StepConfig::new(cfg.dim, cfg.policy, cfg.depth_limit);
    let run = run_construction(space, &group, &schedule, &step)?;

    sink.write("cocycle.txt", &cocycle_to_text(&space, &group, &run.cocycle))?;
    let mut certificates = Vec::new();
    for (i, c) in run.state.certificates.iter().enumerate() {
        let name = format!("cert-{:02}.json", i + 1);
        let file = CertificateFile {
            cocycle_file: "cocycle.txt".into(),
            certificate: c.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        sink.write(&name, &text)?;
        certificates.push(name);
    }
    let mut csv = String::from(
        "stage,sigma,set_index,epsilon,depth,column_depth,breadth,change_measure,collar_change,measured,threshold,internal,incremental\n",
    );
    for s in &run.log.stages {
        let sigma: Vec<String> = s.sigma.iter().map(|c| c.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.stage,
            sigma.join(" "),
            s.set_index.map(|i| i.to_string()).unwrap_or_default(),
            rational_to_string(&s.epsilon),
            s.depth,
            s.column_depth,
            s.breadth,
            rational_to_string(&s.change_measure),
            rational_to_string(&s.collar_change),
            rational_to_string(&s.measured),
            rational_to_string(&s.threshold),
            s.internal,
            s.incremental
        ));
    }
    sink.write("stages.csv", &csv)?;

    let reach: Vec<Value> = schedule
        .pairs
        .iter()
        .map(|&(si, ai)| {
            json!({
                "sigma": schedule.sigmas[si].coeffs,
                "set_index": ai,
                "reach": certificate_reach(&run.state, &schedule.sigmas[si], &schedule.sets[ai]),
            })
        })
        .collect();
    Ok(json!({
        "step_config": to_value(&step),
        "stages": run.log.stages.len(),
        "log": to_value(&run.log),
        "all_certificates_valid": run.log.final_valid.iter().all(|v| *v),
        "perturbation_within_budget": run.log.total_change < run.log.epsilon_sum,
        "final_depth": run.state.transfer.depth(),
        "certificates": certificates,
        "reach": reach,
    }))
}

fn construct_topological(cfg: &WorkspaceConfig, a: &TopologicalArgs, sink: &mut Sink) -> Result<Value> {
    let text = fs::read_to_string(&a.targets).map_err(|e| Error::Parse(format!("{}: {e}", a.targets.display())))?;
    let targets = parse_targets(&text)?;
    if let Some(t) = targets.iter().find(|t| t.value.len() != a.valdim) {
        return Err(Error::DimensionMismatch {
            expected: a.valdim,
            got: t.value.len(),
        });
    }
    let space = ShiftSpace::new(a.alphabet, cfg.dim, a.theta)?;
    let mut h = build_sequential(space, a.valdim, &targets, a.budget)?;
    let mut csv = String::from(
        "term,level,value,eta,guard,shift,term_norm,prefix_residual,final_residual,tail_bound,bump_level,minimal_level\n",
    );
    for (k, r) in h.records().iter().enumerate() {
        let value: Vec<String> = r.target.value.iter().map(|v| v.to_string()).collect();
        let shift: Vec<String> = r.shift.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            k + 1,
            r.target.level,
            value.join(" "),
            r.target.eta,
            r.guard,
            shift.join(" "),
            r.term_norm,
            r.prefix_residual,
            r.final_residual,
            r.tail_bound,
            r.bump_level,
            r.minimal_level
        ));
    }
    sink.write("terms.csv", &csv)?;
    let coverage = if a.coverage_budget > 0 {
        let window = WindowPattern::around(h.point(), a.window_level);
        let rep = verify_transitive_orbit(&mut h, &window, a.radius, a.delta, a.coverage_budget)?;
        sink.write("coverage.csv", &rep.to_csv())?;
        json!({
            "budget": rep.budget,
            "delta": rep.delta,
            "radius": rep.radius,
            "window_level": a.window_level,
            "spatial_level": rep.spatial_level,
            "cells": rep.cells,
            "values_per_cell": rep.values_per_cell,
            "covered": rep.covered,
            "fraction": rep.fraction,
        })
    } else {
        Value::Null
    };
    Ok(json!({
        "alphabet": a.alphabet,
        "theta": a.theta,
        "value_dim": a.valdim,
        "search_budget": a.budget,
        "records": to_value(&h.records()),
        "coverage": coverage,
    }))
}

/// Loads a certificate file and the cocycle it names.
pub fn load_certificate(path: &Path) -> Result<(CertificateFile, Odometer, ValueGroup, Cocycle)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let file: CertificateFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cpath = base.join(&file.cocycle_file);
    let ctext = fs::read_to_string(&cpath).map_err(|e| Error::Parse(format!("{}: {e}", cpath.display())))?;
    let (space, group, cocycle) = cocycle_from_text(&ctext)?;
    Ok((file, space, group, cocycle))
}

fn verify_evc(a: &VerifyArgs) -> Result<Value> {
    let (file, space, group, cocycle) = load_certificate(&a.certificate)?;
    let cert = &file.certificate;
    if cert.set.space() != space {
        return Err(Error::Verification(
            "set: certificate set lives on a different odometer".into(),
        ));
    }
    cert.validate(&group, &cocycle)?;
    Ok(json!({
        "valid": true,
        "cocycle_file": file.cocycle_file,
        "set": cert.set.to_text(),
        "sigma": cert.sigma.coeffs,
        "epsilon": cert.epsilon,
        "c": rational_to_string(&cert.c),
        "measured": rational_to_string(&cert.measured),
        "slack": rational_to_string(&cert.slack()),
        "max_path_length": cert.holonomy.max_path_length(),
    }))
}

fn scan(cfg: &WorkspaceConfig, a: &ScanArgs, sink: &mut Sink) -> Result<Value> {
    let text = fs::read_to_string(&a.cocycle).map_err(|e| Error::Parse(format!("{}: {e}", a.cocycle.display())))?;
    let (space, group, phi) = cocycle_from_text(&text)?;
    let set = match &a.set {
        Some(t) => MeasurableSet::parse_text(space, t)?,
        None => MeasurableSet::whole(space),
    };
    let value = match &a.value {
        Some(t) => {
            let c = parse_ints(t)?;
            if c.len() != group.pairs() {
                return Err(Error::DimensionMismatch {
                    expected: group.pairs(),
                    got: c.len(),
                });
            }
            group.value(c)
        }
        None => group.zero(),
    };
    let levels = LevelBox::ball(space.dim, a.radius);
    let witnesses: Vec<LatticeVector> = essential_value_scan(&group, &phi, &set, &value, a.epsilon, &levels)
        .into_iter()
        .filter(|n| n.norm(cfg.norm) <= a.radius)
        .collect();
    let header: Vec<String> = (1..=space.dim).map(|i| format!("n{i}")).collect();
    let mut csv = header.join(",") + "\n";
    for n in &witnesses {
        let c: Vec<String> = n.coords().iter().map(|x| x.to_string()).collect();
        csv.push_str(&(c.join(",") + "\n"));
    }
    sink.write("witnesses.csv", &csv)?;
    let coords: Vec<&[i64]> = witnesses.iter().map(|n| n.coords()).collect();
    Ok(json!({
        "set": set.to_text(),
        "value": value.coeffs,
        "epsilon": a.epsilon,
        "radius": a.radius,
        "norm": cfg.norm.to_string(),
        "count": witnesses.len(),
        "witnesses": coords,
    }))
}

/// Steps `±e_i` with equal weight, plus a zero step of weight 1/2 when lazy.
pub fn simple_walk(dim: usize, lazy: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut phi = Vec::new();
    let mut mu = Vec::new();
    if lazy {
        phi.push(vec![0.0; dim]);
        mu.push(0.5);
    }
    let w = if lazy { 0.25 } else { 0.5 } / dim as f64;
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = s;
            phi.push(v);
            mu.push(w);
        }
    }
    (phi, mu)
}

fn rw_demo(cfg: &WorkspaceConfig, a: &WalkArgs, sink: &mut Sink) -> Result<Value> {
    if a.valdim == 0 || a.trials == 0 || a.steps == 0 {
        return Err(Error::InvalidArgument(
            "valdim, trials and steps must be positive".into(),
        ));
    }
    let (phi, mu) = simple_walk(a.valdim, a.lazy);
    let rep = recurrence_diagnostic(&phi, &mu, a.steps, a.trials, a.radius, cfg.seed)?;
    let x = ShiftPoint::with_weights(&mu, 1, rep.trials[0].seed)?;
    let path = random_walk_path(&phi, &x, a.steps)?;
    let stride = (a.steps / a.samples.max(1)).max(1) as usize;
    let header: Vec<String> = (1..=a.valdim).map(|i| format!("x{i}")).collect();
    let mut csv = format!("step,{}\n", header.join(","));
    for (m, p) in path.iter().enumerate().step_by(stride) {
        let c: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("{m},{}\n", c.join(",")));
    }
    sink.write("path.csv", &csv)?;
    let mut occ = String::from("horizon,occupation\n");
    for (h, f) in &rep.mean_occupation {
        occ.push_str(&format!("{h},{f}\n"));
    }
    sink.write("occupation.csv", &occ)?;
    Ok(json!({
        "value_dim": a.valdim,
        "lazy": a.lazy,
        "steps": a.steps,
        "symbols": phi,
        "weights": mu,
        "recurrence": to_value(&rep),
    }))
}

fn decompose(cfg: &WorkspaceConfig, a: &DecomposeArgs, sink: &mut Sink) -> Result<Value> {
    let (f, truth) = match (&a.input, a.synthesize) {
        (Some(p), false) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            (BlockCocycle::parse_text(&text)?, None)
        }
        (None, true) => {
            let g = BlockFunction::random_dyadic(2, cfg.dim, 2, a.valdim, 8, cfg.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
            let images = (0..cfg.dim)
                .map(|_| {
                    (0..a.valdim)
                        .map(|_| rng.gen_range(-256i64..=256) as f64 / 256.0)
                        .collect()
                })
                .collect();
            let h = HomomorphismH::new(images);
            let f = BlockCocycle::synthesize(&g, &h)?;
            sink.write("input.txt", &f.to_text())?;
            (f, Some(h))
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give exactly one of --input or --synthesize".into(),
            ))
        }
    };
    let d = decompose_block_cocycle(&f, a.depth, a.tol)?;
    let len = (d.g.depth() as usize).pow(d.g.dim() as u32);
    let sep = if d.g.alphabet() > 10 { "." } else { "" };
    let mut csv = String::from("pattern,value\n");
    for (i, v) in d.g.table().iter().enumerate() {
        let mut idx = i as u64;
        let pat: Vec<String> = (0..len)
            .map(|_| {
                let s = idx % d.g.alphabet() as u64;
                idx /= d.g.alphabet() as u64;
                s.to_string()
            })
            .collect();
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        csv.push_str(&format!("{},{}\n", pat.join(sep), vals.join(" ")));
    }
    sink.write("transfer.csv", &csv)?;
    let truth = truth.map(|h| {
        let err = h
            .images
            .iter()
            .flatten()
            .zip(d.h.images.iter().flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        json!({ "homomorphism": h.images, "max_error": err })
    });
    Ok(json!({
        "input_depth": f.depth(),
        "homomorphism": d.h.images,
        "residual": d.residual,
        "transfer_depth": d.depth,
        "attempts": d.attempts,
        "outside_guarantee": d.outside_guarantee,
        "image_shape": to_value(&d.image_shape),
        "truth": truth,
    }))
}

fn j_action(cfg: &WorkspaceConfig, a: &JActionArgs, sink: &mut Sink) -> Result<Value> {
    let alpha = parse_reals(&a.alpha)?;
    let x0 = match &a.x0 {
        Some(t) => parse_reals(t)?,
        None => vec![0.0; alpha.len()],
    };
    let eq = equidistribution_check(&alpha, &x0, a.steps, a.cells)?;
    let d = alpha.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = 0u64;
    for _ in 0..a.checks {
        let x = (0..alpha.len()).map(|_| rng.gen::<f64>()).collect();
        let z = (0..alpha.len()).map(|_| rng.gen_range(-1000i64..=1000)).collect();
        let p = TorusLatticePoint::new(x, z)?;
        for k in 1..=d {
            for l in k + 1..=d {
                let kl = j_action_apply(k, &j_action_apply(l, &p, &alpha)?, &alpha)?;
                let lk = j_action_apply(l, &j_action_apply(k, &p, &alpha)?, &alpha)?;
                if kl != lk {
                    failures += 1;
                }
            }
        }
    }
    let mut csv = String::from("horizon,discrepancy\n");
    for (h, v) in &eq.discrepancies {
        csv.push_str(&format!("{h},{v}\n"));
    }
    sink.write("discrepancy.csv", &csv)?;
    if failures > 0 {
        return Err(Error::Verification(format!(
            "commutation: {failures} generator pairs disagree"
        )));
    }
    Ok(json!({
        "alpha": alpha,
        "x0": x0,
        "steps": a.steps,
        "commutation": { "points": a.checks, "pairs": d * (d - 1) / 2, "failures": failures },
        "equidistribution": to_value(&eq),
    }))
}

fn inspect(a: &InspectArgs) -> Result<Value> {
    let text = fs::read_to_string(&a.file).map_err(|e| Error::Parse(format!("{}: {e}", a.file.display())))?;
    let head = text.trim_start();
    if head.starts_with("cocycle") {
        let (space, group, c) = cocycle_from_text(&text)?;
        return Ok(json!({
            "kind": "cocycle",
            "dim": space.dim,
            "base": space.base,
            "group": group.to_text(),
            "resolution": c.resolution(),
            "form": match &c {
                Cocycle::Coboundary(_) => "coboundary",
                Cocycle::Homomorphism(_) => "homomorphism",
                Cocycle::Sum(_) => "sum",
            },
        }));
    }
    if head.starts_with("blocks") {
        let f = BlockCocycle::parse_text(&text)?;
        return Ok(json!({
            "kind": "block-cocycle",
            "alphabet": f.alphabet(),
            "dim": f.dim(),
            "depth": f.depth(),
            "value_dim": f.value_dim(),
            "mixed_defect": f.mixed_defect()?,
        }));
    }
    if head.starts_with('{') {
        let v: Value = serde_json::from_str(&text)?;
        if v.get("certificate").is_some() {
            let file: CertificateFile = serde_json::from_value(v)?;
            let c = &file.certificate;
            return Ok(json!({
                "kind": "certificate",
                "cocycle_file": file.cocycle_file,
                "set": c.set.to_text(),
                "sigma": c.sigma.coeffs,
                "epsilon": c.epsilon,
                "c": rational_to_string(&c.c),
                "measured": rational_to_string(&c.measured),
                "pieces": c.holonomy.pieces().len(),
            }));
        }
        if v.get("command").is_some() {
            let r: RunReport = serde_json::from_value(v)?;
            return Ok(json!({
                "kind": "report",
                "command": r.command,
                "exit_status": r.exit_status,
                "outputs": r.outputs,
            }));
        }
        return Err(Error::Parse("unrecognized JSON document".into()));
    }
    let cfg = WorkspaceConfig::parse(&text)?;
    Ok(json!({ "kind": "config", "resolved": cfg.resolved() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let text = "# demo\ndim = 1\nbase = 2\nseed = 9\nrounds = 2\npolicy = conservative\n";
        let cfg = WorkspaceConfig::parse(text).unwrap();
        assert_eq!(cfg.text, text);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.policy, ScalePolicy::Conservative);
        let s = cfg.schedule().unwrap();
        assert_eq!(s.pairs.len(), 8);
        assert_eq!(cfg.resolved()["group"], "kind=lattice; S=[(1/1)]");
    }

    #[test]
    fn config_errors_are_parse_errors() {
        for bad in [
            "dim = x",
            "colour = red",
            "justtext",
            "base = 1",
            "sets = depth=1; cells=[]",
        ] {
            let e = WorkspaceConfig::parse(bad).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}: {e}");
        }
    }

    #[test]
    fn real_sums_parse() {
        assert!((parse_real("sqrt(2)-1").unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(parse_real("-0.5").unwrap(), -0.5);
        assert_eq!(parse_real("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_real("1+2").unwrap(), 3.0);
        assert!(parse_real("sqrt(2").is_err());
    }

    #[test]
    fn targets_parse() {
        let t = parse_targets("level=2 value=1 eta=1\n# c\nlevel=3 value=-1 eta=0.5\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].value, vec![-1.0]);
        assert!(parse_targets("level=2 value=1").is_err());
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let e = dispatch(["cocyclab", "inspect", "--bogus", "x"]).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.text.contains("Usage"));
    }

    #[test]
    fn lazy_walk_is_centred() {
        let (phi, mu) = simple_walk(3, true);
        assert_eq!(phi.len(), 7);
        assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(mu[0], 0.5);
    }
}
