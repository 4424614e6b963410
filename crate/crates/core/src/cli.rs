//! `holonomy` command-line front end.
//!
//! Each subcommand resolves an [`ExperimentConfig`] from flags, an optional
//! JSON config file (`--config`), and the `HOLONOMY_SEED` environment
//! variable, in that order of precedence. It then computes a report and
//! writes `<output>/report.json` (plus `shots.csv` for `rus-run --csv`).
//! Reports contain no timestamps and print every float with 17
//! significant digits, so equal configs give byte-identical files.
//!
//! Exit codes: 0 success, 2 configuration error, 1 numerical or I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::Error;
use crate::numerics::{phase, random_state, ComplexMatrix, StateVector, TolerancePolicy, C64};
use crate::protocols::{
    build_general_rus_graph, build_qubit_rus_graph, run_shots, shot_seed, step_distribution,
    transit_moments, MeasurementGraph, PhaseClass,
};
use crate::sequences::{
    bargmann_invariant, compose_diag_unitary, cumulative_operator, build_phase_loop, loop_states,
    survival_probability, PhaseLoopSpec,
};
use crate::subspaces::{complement, isometry_report, random_state_in, IsometryReport, Subspace};

pub const SEED_ENV: &str = "HOLONOMY_SEED";
pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PhaseLoop,
    Compose,
    IsometryCheck,
    RusRun,
    RusAnalyze,
    ZenoSweep,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PhaseLoop => "phase-loop",
            Self::Compose => "compose",
            Self::IsometryCheck => "isometry-check",
            Self::RusRun => "rus-run",
            Self::RusAnalyze => "rus-analyze",
            Self::ZenoSweep => "zeno-sweep",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "holonomy", version, about = "Holonomies from sequences of degenerate projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One geometric-phase loop on component 1 with a single auxiliary level.
    PhaseLoop(Flags),
    /// Diagonal unitary from one loop per logical component.
    Compose(Flags),
    /// Isometry verdict for the canonical pair plus a randomized search.
    IsometryCheck(Flags),
    /// Monte Carlo runs of the repeat-until-success graph.
    RusRun(Flags),
    /// Exact transit statistics and edge diagnostics of the graph.
    RusAnalyze(Flags),
    /// Loop amplitude against refinement.
    ZenoSweep(Flags),
}

#[derive(Debug, Args, Default)]
struct Flags {
    /// JSON file with ExperimentConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Single phase; for rus-* this selects the qubit graph diag(1, e^{iφ}).
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Comma-separated phases, one per logical level.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,
    #[arg(long)]
    refinement: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long)]
    ambient: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Output directory.
    #[arg(long = "output", alias = "output-path")]
    output_path: Option<PathBuf>,
    /// Also write per-shot records to shots.csv.
    #[arg(long)]
    csv: bool,
}

/// Config file contents; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<Mode>,
    k: Option<usize>,
    phi: Option<f64>,
    phases: Option<Vec<f64>>,
    refinement: Option<usize>,
    theta: Option<f64>,
    ambient: Option<usize>,
    seed: Option<u64>,
    shots: Option<u64>,
    max_steps: Option<usize>,
    output_path: Option<PathBuf>,
    csv: Option<bool>,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub k: usize,
    /// Target phases; for the qubit graph these are `[0, φ]`.
    pub phases: Vec<f64>,
    /// Whether a single `phi` selected the qubit form (`rus-*` only).
    pub qubit: bool,
    pub refinement: usize,
    pub theta: f64,
    pub ambient: usize,
    pub seed: u64,
    pub shots: u64,
    pub max_steps: usize,
    pub output_path: PathBuf,
    pub csv: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(clap::Error),
    Config(String),
    Numerical(Error),
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Numerical(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(e) => write!(f, "{e}"),
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve(mode: Mode, flags: Flags) -> Result<ExperimentConfig, CliError> {
    let file = match &flags.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    if let Some(m) = file.mode {
        if m != mode {
            return config_err(format!(
                "field `mode`: file says {:?} but subcommand is {:?}",
                m.as_str(),
                mode.as_str()
            ));
        }
    }
    let k = flags.k.or(file.k);
    let phi = flags.phi.or(file.phi);
    let phases = flags.phases.or(file.phases);
    let refinement = flags.refinement.or(file.refinement);
    let theta = flags.theta.or(file.theta).unwrap_or(std::f64::consts::FRAC_PI_4);
    let seed = match flags.seed.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let shots = flags.shots.or(file.shots);
    let max_steps = flags.max_steps.or(file.max_steps).unwrap_or(10_000);
    let output_path = flags
        .output_path
        .or(file.output_path)
        .unwrap_or_else(|| PathBuf::from("holonomy-output"));
    let csv = flags.csv || file.csv.unwrap_or(false);

    if phi.is_some() && phases.is_some() {
        return config_err("fields `phi` and `phases` are mutually exclusive");
    }
    if !theta.is_finite() {
        return config_err("field `theta` must be finite");
    }
    if let Some(p) = &phases {
        if p.is_empty() {
            return config_err("field `phases` must not be empty");
        }
    }
    if phi.iter().chain(phases.iter().flatten()).any(|x| !x.is_finite()) {
        return config_err("phases must be finite");
    }
    if refinement == Some(0) {
        return config_err("field `refinement` must be >= 1");
    }
    if shots == Some(0) {
        return config_err("field `shots` must be >= 1");
    }
    if max_steps == 0 {
        return config_err("field `max_steps` must be >= 1");
    }
    if k == Some(0) {
        return config_err("field `k` must be >= 1");
    }

    let mut qubit = false;
    let (k, phases) = match mode {
        Mode::PhaseLoop => {
            let phi = match (phi, &phases) {
                (Some(p), _) => p,
                (None, Some(p)) if p.len() == 1 => p[0],
                (None, Some(_)) => return config_err("phase-loop takes a single phase (`phi`)"),
                (None, None) => return config_err("phase-loop requires `phi`"),
            };
            (k.unwrap_or(1), vec![phi])
        }
        Mode::Compose => {
            let p = match (phi, phases) {
                (Some(p), _) => vec![p],
                (None, Some(p)) => p,
                (None, None) => return config_err("compose requires `phases`"),
            };
            if k.is_some_and(|k| k != p.len()) {
                return config_err("field `k` must equal the number of phases");
            }
            (p.len(), p)
        }
        Mode::RusRun | Mode::RusAnalyze => match (phi, phases) {
            (Some(p), _) => {
                if k.is_some_and(|k| k != 2) {
                    return config_err("`phi` selects the qubit graph; `k` must be 2 or omitted");
                }
                qubit = true;
                (2, vec![0.0, p])
            }
            (None, Some(p)) => {
                if k.is_some_and(|k| k != p.len()) {
                    return config_err("field `k` must equal the number of phases");
                }
                (p.len(), p)
            }
            (None, None) => return config_err(format!("{} requires `phi` or `phases`", mode.as_str())),
        },
        Mode::IsometryCheck => match k {
            Some(k) => (k, Vec::new()),
            None => return config_err("isometry-check requires `k`"),
        },
        Mode::ZenoSweep => (k.unwrap_or(1), phases.unwrap_or_else(|| vec![phi.unwrap_or(0.0)])),
    };
    let ambient = match mode {
        Mode::IsometryCheck => flags.ambient.or(file.ambient).unwrap_or(2 * k),
        Mode::PhaseLoop | Mode::Compose | Mode::ZenoSweep => k + 1,
        Mode::RusRun | Mode::RusAnalyze => 2 * k,
    };
    if mode == Mode::IsometryCheck && ambient < k {
        return config_err("field `ambient` must be >= `k`");
    }
    let default_shots = match mode {
        Mode::RusRun => 10_000,
        Mode::IsometryCheck => 10_000,
        _ => 100,
    };
    let default_refinement = if mode == Mode::ZenoSweep { 64 } else { 1 };
    Ok(ExperimentConfig {
        mode,
        k,
        phases,
        qubit,
        refinement: refinement.unwrap_or(default_refinement),
        theta,
        ambient,
        seed,
        shots: shots.unwrap_or(default_shots),
        max_steps,
        output_path,
        csv,
    })
}

/// JSON value with order-preserving objects and fixed-precision floats.
#[derive(Debug, Clone)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(String, Json)>),
}

impl Json {
    fn obj() -> Self {
        Self::Object(Vec::new())
    }

    fn with(mut self, key: &str, value: impl Into<Json>) -> Self {
        if let Self::Object(fields) = &mut self {
            fields.push((key.to_string(), value.into()));
        }
        self
    }

    fn all_finite(&self) -> bool {
        match self {
            Self::Num(x) => x.is_finite(),
            Self::Array(v) => v.iter().all(Json::all_finite),
            Self::Object(f) => f.iter().all(|(_, v)| v.all_finite()),
            _ => true,
        }
    }
}

impl From<f64> for Json {
    fn from(x: f64) -> Self {
        Self::Num(x)
    }
}
impl From<bool> for Json {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}
impl From<usize> for Json {
    fn from(n: usize) -> Self {
        Self::Int(n as i64)
    }
}
impl From<u64> for Json {
    fn from(n: u64) -> Self {
        Self::Str(n.to_string())
    }
}
impl From<&str> for Json {
    fn from(s: &str) -> Self {
        Self::Str(s.to_string())
    }
}
impl From<String> for Json {
    fn from(s: String) -> Self {
        Self::Str(s)
    }
}
impl<T: Into<Json>> From<Vec<T>> for Json {
    fn from(v: Vec<T>) -> Self {
        Self::Array(v.into_iter().map(Into::into).collect())
    }
}
impl<T: Into<Json>> From<Option<T>> for Json {
    fn from(v: Option<T>) -> Self {
        v.map_or(Self::Null, Into::into)
    }
}

/// `d.dddddddddddddddde±x`: 17 significant digits.
pub fn format_float(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

impl Serialize for Json {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeMap, SerializeSeq};
        match self {
            Self::Null => s.serialize_unit(),
            Self::Bool(b) => s.serialize_bool(*b),
            Self::Int(n) => s.serialize_i64(*n),
            Self::Num(x) => {
                if !x.is_finite() {
                    return Err(S::Error::custom("non-finite number in report"));
                }
                RawValue::from_string(format_float(*x))
                    .map_err(S::Error::custom)?
                    .serialize(s)
            }
            Self::Str(t) => s.serialize_str(t),
            Self::Array(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for item in v {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Self::Object(fields) => {
                let mut map = s.serialize_map(Some(fields.len()))?;
                for (k, v) in fields {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

fn complex(z: C64) -> Json {
    Json::from(vec![z.re, z.im])
}

fn matrix(m: &ComplexMatrix) -> Json {
    Json::Array(
        (0..m.rows())
            .map(|r| Json::Array(m.row(r).iter().map(|&z| complex(z)).collect()))
            .collect(),
    )
}

fn config_json(cfg: &ExperimentConfig) -> Json {
    let mut out = Json::obj()
        .with("mode", cfg.mode.as_str())
        .with("k", cfg.k)
        .with("phases", cfg.phases.clone())
        .with("refinement", cfg.refinement)
        .with("theta", cfg.theta)
        .with("ambient", cfg.ambient)
        .with("seed", cfg.seed)
        .with("shots", cfg.shots)
        .with("max_steps", cfg.max_steps);
    if matches!(cfg.mode, Mode::RusRun | Mode::RusAnalyze) {
        out = out.with("graph", if cfg.qubit { "qubit" } else { "general" });
    }
    out
}

fn isometry_json(r: &IsometryReport) -> Json {
    Json::obj()
        .with("is_isometry", r.is_isometry)
        .with("reason", r.reason())
        .with("scale", r.scale)
        .with("principal_angles", r.principal_angles.clone())
        .with("shared_dim", r.shared_dim)
        .with("required_min_ambient", r.required_min_ambient)
        .with("trivial_identity", r.trivial_identity)
}

/// Output of one command: the report and optional CSV text.
pub struct Artifacts {
    pub report: Json,
    pub csv: Option<String>,
}

fn rus_graph(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<MeasurementGraph, Error> {
    if cfg.qubit {
        build_qubit_rus_graph(cfg.phases[1], policy)
    } else {
        build_general_rus_graph(&cfg.phases, policy)
    }
}

fn phase_loop(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<Json, Error> {
    let spec = PhaseLoopSpec::new(cfg.k, 1, cfg.phases[0], cfg.refinement)?;
    let seq = build_phase_loop(&spec, policy)?;
    let gamma = cumulative_operator(&seq);
    let t = gamma[(0, 0)];
    let survival = survival_probability(&gamma, &StateVector::basis(spec.ambient_dim(), 0), policy)?;
    let states = loop_states(&spec)?;
    let two_level: Vec<StateVector> = states
        .iter()
        .map(|s| StateVector::new(vec![s.amplitudes()[0], s.amplitudes()[spec.ancilla()]]))
        .collect::<Result<_, _>>()?;
    let bargmann = bargmann_invariant(&two_level, policy)?;
    let n = cfg.refinement as f64;
    let closed_form = (std::f64::consts::PI / (4.0 * n)).cos().powf(4.0 * n);
    Ok(Json::obj()
        .with("projections", seq.len())
        .with("cyclic", seq.is_cyclic())
        .with("amplitude", complex(t))
        .with("scale", t.norm())
        .with("scale_squared", t.norm_sqr())
        .with("phase", t.arg())
        .with("survival_probability", survival)
        .with("bargmann_invariant", complex(bargmann))
        .with("closed_form_scale", closed_form))
}

fn compose(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<(Json, Json), Error> {
    let (gamma, scale) = compose_diag_unitary(&cfg.phases, cfg.refinement, policy)?;
    let k = cfg.k;
    let block = gamma.block(k, k).scale(C64::new(1.0 / scale, 0.0));
    let target = ComplexMatrix::from_diagonal(&cfg.phases.iter().map(|&p| phase(p)).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..cfg.shots {
        let logical = random_state(k, &mut rng);
        let mut amps = logical.into_amplitudes();
        amps.push(C64::new(0.0, 0.0));
        let p = survival_probability(&gamma, &StateVector::new(amps)?, policy)?;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let summary = Json::obj()
        .with("projections", 4 * cfg.refinement * k + 1)
        .with("scale", scale)
        .with("scale_squared", scale * scale)
        .with("unitarity_error", block.unitarity_error())
        .with("target_error", block.max_abs_diff(&target))
        .with("survival_min", lo)
        .with("survival_max", hi)
        .with("fidelity", (&target.adjoint() * &block).trace().norm() / k as f64);
    Ok((summary, matrix(&block)))
}

fn isometry_check(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<Json, Error> {
    let (n, k) = (cfg.ambient, cfg.k);
    let source = Subspace::coordinate(n, &(0..k).collect::<Vec<_>>())?;
    let (s, c) = cfg.theta.sin_cos();
    let mut basis = ComplexMatrix::zeros(n, k);
    for j in 0..k {
        if k + j < n {
            basis[(j, j)] = C64::new(c, 0.0);
            basis[(k + j, j)] = C64::new(s, 0.0);
        } else {
            basis[(j, j)] = C64::new(1.0, 0.0);
        }
    }
    let target = Subspace::from_basis(basis, policy)?;
    let report = isometry_report(&source, &target, policy)?;
    let complement_report = if target.rank() < n {
        Some(isometry_json(&isometry_report(&source, &complement(&target)?, policy)?))
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut hits = 0usize;
    for _ in 0..cfg.shots {
        let a = Subspace::random(n, k, &mut rng);
        let b = Subspace::random(n, k, &mut rng);
        if isometry_report(&a, &b, policy)?.is_isometry {
            hits += 1;
        }
    }
    Ok(Json::obj()
        .with("verdict", report.is_isometry)
        .with("reason", report.reason())
        .with("pair", isometry_json(&report))
        .with("complement", complement_report)
        .with("random_trials", cfg.shots)
        .with("random_isometries", hits))
}

fn rus_run(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<(Json, Json, String), Error> {
    let graph = rus_graph(cfg, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(shot_seed(cfg.seed, u64::MAX));
    let psi = random_state_in(graph.start_subspace(), &mut rng);
    let shots = run_shots(&graph, &psi, cfg.seed, cfg.shots, cfg.max_steps, policy)?;

    let done: Vec<_> = shots.iter().filter(|s| s.completed).collect();
    let count = done.len() as f64;
    let mean = done.iter().map(|s| s.steps as f64).sum::<f64>() / count.max(1.0);
    let var = if done.len() > 1 {
        done.iter().map(|s| (s.steps as f64 - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let se = std / count.max(1.0).sqrt();
    let expected = transit_moments(&graph, policy)?;
    let worst = done.iter().filter_map(|s| s.holonomy_error).fold(0.0, f64::max);
    let plus = shots.iter().filter(|s| s.phase_class == PhaseClass::Plus).count();
    let minus = shots.iter().filter(|s| s.phase_class == PhaseClass::Minus).count();

    let mut csv = String::from("shot,steps,completed,phase_class\n");
    for s in &shots {
        let _ = writeln!(csv, "{},{},{},{}", s.shot, s.steps, s.completed, s.phase_class.as_str());
    }
    let fidelity = 1.0 - worst;
    let summary = Json::obj()
        .with("completed", done.len())
        .with("success_rate", count / cfg.shots as f64)
        .with("mean_steps", mean)
        .with("std_steps", std)
        .with("standard_error", se)
        .with("expected_steps", expected.mean)
        .with("expected_std", expected.variance.sqrt())
        .with("z_score", if se > 0.0 { (mean - expected.mean) / se } else { 0.0 })
        .with("phase_plus", plus)
        .with("phase_minus", minus)
        .with("phase_unknown", shots.len() - plus - minus)
        .with("max_holonomy_error", worst)
        .with("fidelity", fidelity)
        .with(
            "initial_state",
            Json::Array(psi.amplitudes().iter().map(|&z| complex(z)).collect()),
        );
    let target = graph.target().ok_or(Error::MissingTarget)?;
    Ok((summary, matrix(target), csv))
}

fn rus_analyze(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<Json, Error> {
    let graph = rus_graph(cfg, policy)?;
    let moments = transit_moments(&graph, policy)?;
    let pmf = step_distribution(&graph, cfg.max_steps.min(4096), policy)?;
    let within: f64 = pmf.iter().sum();
    let mut edges = Vec::new();
    for (node, outcome, report) in graph.edge_reports(policy)? {
        let m = graph.measurement(node).expect("edge has a measurement");
        let b = &m.branches[outcome];
        edges.push(
            Json::obj()
                .with("from", graph.node(node).label.as_str())
                .with("outcome", outcome)
                .with("to", graph.node(b.successor).label.as_str())
                .with("completes", b.completes)
                .with("probability", report.scale * report.scale)
                .with("is_isometry", report.is_isometry),
        );
    }
    Ok(Json::obj()
        .with("nodes", graph.nodes().len())
        .with("ambient_dim", graph.ambient_dim())
        .with("stepwise_isometric", graph.is_stepwise_isometric(policy)?)
        .with("expected_steps", moments.mean)
        .with("variance_steps", moments.variance)
        .with("completion_within_max_steps", within)
        .with("step_pmf", pmf.into_iter().take(32).collect::<Vec<_>>())
        .with("edges", Json::Array(edges)))
}

fn zeno_sweep(cfg: &ExperimentConfig, policy: &TolerancePolicy) -> Result<Json, Error> {
    let mut rows = Vec::new();
    let mut n = 1;
    while n <= cfg.refinement {
        let (_, scale) = compose_diag_unitary(&cfg.phases, n, policy)?;
        let closed = (std::f64::consts::PI / (4.0 * n as f64)).cos().powf(4.0 * n as f64);
        rows.push(
            Json::obj()
                .with("refinement", n)
                .with("projections", 4 * n * cfg.phases.len() + 1)
                .with("scale", scale)
                .with("closed_form", closed)
                .with("abs_error", (scale - closed).abs()),
        );
        n *= 2;
    }
    Ok(Json::obj().with("sweep", Json::Array(rows)))
}

/// Computes the artifacts for a resolved config without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Artifacts, Error> {
    let policy = TolerancePolicy::default();
    let mut report = Json::obj().with("mode", cfg.mode.as_str()).with("config", config_json(cfg));
    let mut csv = None;
    match cfg.mode {
        Mode::PhaseLoop => report = report.with("summary", phase_loop(cfg, &policy)?),
        Mode::Compose => {
            let (summary, block) = compose(cfg, &policy)?;
            report = report.with("summary", summary).with("holonomy", block);
        }
        Mode::IsometryCheck => report = report.with("summary", isometry_check(cfg, &policy)?),
        Mode::RusRun => {
            let (summary, holonomy, shots) = rus_run(cfg, &policy)?;
            report = report.with("summary", summary).with("holonomy", holonomy);
            csv = cfg.csv.then_some(shots);
        }
        Mode::RusAnalyze => report = report.with("summary", rus_analyze(cfg, &policy)?),
        Mode::ZenoSweep => report = report.with("summary", zeno_sweep(cfg, &policy)?),
    }
    if !report.all_finite() {
        return Err(Error::NonFinite("report"));
    }
    Ok(Artifacts { report, csv })
}

/// Serializes a report exactly as written to `report.json`.
pub fn render(report: &Json) -> Result<String, Error> {
    let mut text = serde_json::to_string_pretty(report).map_err(|_| Error::NonFinite("report"))?;
    text.push('\n');
    Ok(text)
}

fn write_atomically(dir: &Path, files: &[(&str, &str)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, contents) {
            for t in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(CliError::Io(format!("{}: {e}", tmp.display())));
        }
        staged.push(tmp);
    }
    for ((name, _), tmp) in files.iter().zip(&staged) {
        fs::rename(tmp, dir.join(name)).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
    }
    Ok(())
}

fn parse(args: Vec<OsString>) -> Result<ExperimentConfig, CliError> {
    let cli = Cli::try_parse_from(args).map_err(CliError::Usage)?;
    let (mode, flags) = match cli.command {
        Command::PhaseLoop(f) => (Mode::PhaseLoop, f),
        Command::Compose(f) => (Mode::Compose, f),
        Command::IsometryCheck(f) => (Mode::IsometryCheck, f),
        Command::RusRun(f) => (Mode::RusRun, f),
        Command::RusAnalyze(f) => (Mode::RusAnalyze, f),
        Command::ZenoSweep(f) => (Mode::ZenoSweep, f),
    };
    resolve(mode, flags)
}

fn dispatch(args: Vec<OsString>) -> Result<PathBuf, CliError> {
    let cfg = parse(args)?;
    let artifacts = execute(&cfg)?;
    let report = render(&artifacts.report)?;
    let mut files = vec![("report.json", report.as_str())];
    if let Some(csv) = &artifacts.csv {
        files.push(("shots.csv", csv.as_str()));
    }
    write_atomically(&cfg.output_path, &files)?;
    Ok(cfg.output_path.join("report.json"))
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match dispatch(args) {
        Ok(path) => {
            println!("{}", path.display());
            EXIT_OK
        }
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            }
        }
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_NUMERICAL
        }
    }
}

/// Resolves a config as the CLI would, for callers that drive [`execute`]
/// directly.
pub fn resolve_args<I, T>(argv: I) -> Result<ExperimentConfig, String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse(argv.into_iter().map(Into::into).collect()).map_err(|e| e.to_string())
}
