//! The `rsp` command-line front end.
//!
//! Every subcommand returns its output and exit code instead of printing, so
//! the whole CLI can be driven from tests through [`run_cli`].
//!
//! Exit codes: 0 success, 1 configuration error, 2 verification or invariant
//! failure.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::gates::{
    controlled_shift, correction_unitary, encoding_unitary, encoding_unitary_literal,
    literal_defect_closed_form, nguyen_bases, pauli_x, pauli_z, ShiftTable,
};
use crate::oracle::{compare_exact, compare_sampled, enumerate_naive, BranchDistribution};
use crate::protocols::{
    exact_outcome_table, run_protocol, success_probability, ChannelSpec, Mode, Protocol, TargetState,
    DEFAULT_SUCCESS_TOL,
};
use crate::rng::{derive_seed, trial_rng, TrialRng};
use crate::tensor::{c, unitarity_defect, CMat, CVec, C64};
use crate::tomography::{
    bloch_vector, reconstruct_qubit, sample_pauli_expectations, tomograph, trace_distance, PauliEstimates,
};
use crate::register::DensityMatrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Input lists may deviate from unit norm by this much before being renormalized.
pub const CONFIG_NORM_TOL: f64 = 1e-5;

pub const CSV_HEADER: &str =
    "theta,alpha,beta,protocol,mode,d,trials,successes,est_prob,exact_prob,mean_fidelity,seed";

const DEFAULT_SWEEP_TARGET: &str = "0.6:0,0.8";
const DEFAULT_TOMO_CHANNEL: &str = "0.6:0.8";

#[derive(Parser, Debug)]
#[command(name = "rsp", version, about = "Remote state preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one protocol instance and print its transcript.
    Run(Flags),
    /// Sweep θ (|α| = sinθ, |β| = cosθ) and write CSV.
    Sweep(Flags),
    /// Run the verification suites.
    Verify {
        /// all | gates | protocols | oracle | tomo
        suite: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Tomograph Bob's output of the deterministic protocol.
    Tomo(Flags),
}

#[derive(Args, Debug, Default, Clone)]
struct Flags {
    #[arg(long, allow_hyphen_values = true)]
    protocol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    d: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    #[arg(long = "theta-min", allow_hyphen_values = true)]
    theta_min: Option<String>,
    #[arg(long = "theta-max", allow_hyphen_values = true)]
    theta_max: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    points: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    shots: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    #[arg(long)]
    config: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tolerance: Option<String>,
    #[arg(long = "inject-fault", hide = true)]
    inject_fault: Option<String>,
}

const KEYS: [&str; 14] = [
    "protocol",
    "mode",
    "d",
    "lambda",
    "target",
    "theta-min",
    "theta-max",
    "points",
    "trials",
    "shots",
    "seed",
    "out",
    "tolerance",
    "inject-fault",
];

impl Flags {
    fn get(&self, key: &str) -> Option<&String> {
        match key {
            "protocol" => self.protocol.as_ref(),
            "mode" => self.mode.as_ref(),
            "d" => self.d.as_ref(),
            "lambda" => self.lambda.as_ref(),
            "target" => self.target.as_ref(),
            "theta-min" => self.theta_min.as_ref(),
            "theta-max" => self.theta_max.as_ref(),
            "points" => self.points.as_ref(),
            "trials" => self.trials.as_ref(),
            "shots" => self.shots.as_ref(),
            "seed" => self.seed.as_ref(),
            "out" => self.out.as_ref(),
            "tolerance" => self.tolerance.as_ref(),
            "inject-fault" => self.inject_fault.as_ref(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubcommandKind {
    Run,
    Sweep,
    Verify,
    Tomo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    All,
    Gates,
    Protocols,
    Oracle,
    Tomo,
}

/// Fully validated configuration of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: SubcommandKind,
    /// First entry drives `run`; `sweep` emits rows for all of them.
    pub protocols: Vec<Protocol>,
    pub mode: Mode,
    pub d: usize,
    pub lambdas: Option<Vec<C64>>,
    pub target: Option<Vec<C64>>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    pub trials: u64,
    pub shots: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerance: f64,
    pub suite: Suite,
    pub inject_fault: Option<String>,
}

impl RunConfig {
    pub fn protocol(&self) -> Protocol {
        self.protocols[0]
    }
}

/// A configuration problem, reported with exit code 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("invalid --{field}: {msg}"))
}

/// Parses `"re"` or `"re,im"`.
pub fn parse_complex(token: &str) -> Result<C64, String> {
    let parts: Vec<&str> = token.split(',').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let z = match parts.as_slice() {
        [re] => c(num(re)?, 0.0),
        [re, im] => c(num(re)?, num(im)?),
        _ => return Err(format!("`{token}` is not `re` or `re,im`")),
    };
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(format!("`{token}` is not finite"));
    }
    Ok(z)
}

/// Colon-separated complex entries, renormalized when within tolerance of unit norm.
pub fn parse_complex_list(text: &str) -> Result<Vec<C64>, String> {
    let v: Vec<C64> = text
        .split(':')
        .map(parse_complex)
        .collect::<Result<_, _>>()?;
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > CONFIG_NORM_TOL {
        return Err(format!("list has norm {norm:.10}, expected 1"));
    }
    Ok(v.into_iter().map(|z| z / norm).collect())
}

/// Angles as plain numbers or multiples of π: `0.3`, `pi`, `pi/4`, `-3pi/8`, `3*pi/8`.
pub fn parse_angle(token: &str) -> Result<f64, String> {
    let t = token.trim().replace('π', "pi").to_ascii_lowercase();
    let bad = || format!("`{token}` is not an angle");
    let v = match t.split_once("pi") {
        None => t.parse::<f64>().map_err(|_| bad())?,
        Some((coef, rest)) => {
            let coef = coef.trim_end_matches('*');
            let k = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                s => s.parse::<f64>().map_err(|_| bad())?,
            };
            let div = match rest {
                "" => 1.0,
                r => r.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
            };
            k * PI / div
        }
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

/// Flat `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError(format!("config line {}: unknown key `{key}`", n + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(field: &str, raw: Option<&str>, default: T) -> Result<T, ConfigError> {
    match raw {
        None => Ok(default),
        Some(s) => s.trim().parse::<T>().map_err(|_| field_err(field, format!("`{s}` is not a valid value"))),
    }
}

fn build_config(command: SubcommandKind, suite: Option<&str>, flags: &Flags) -> Result<RunConfig, ConfigError> {
    let file = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| field_err("config", format!("cannot read `{path}`: {e}")))?;
            parse_config_file(&text)?
        }
        None => BTreeMap::new(),
    };
    let get = |k: &str| flags.get(k).map(String::as_str).or_else(|| file.get(k).map(String::as_str));

    let protocols = match get("protocol") {
        None => vec![Protocol::Deterministic],
        Some(s) => s
            .split(',')
            .map(|p| p.parse::<Protocol>().map_err(|_| field_err("protocol", format!("unknown protocol `{p}`"))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mode = match get("mode") {
        None => Mode::Repaired,
        Some(s) => s.parse::<Mode>().map_err(|_| field_err("mode", format!("unknown mode `{s}`")))?,
    };
    let lambdas = get("lambda")
        .map(|s| parse_complex_list(s).map_err(|e| field_err("lambda", e)))
        .transpose()?;
    let target = match get("target") {
        Some(s) => Some(parse_complex_list(s).map_err(|e| field_err("target", e))?),
        None if command == SubcommandKind::Sweep => Some(parse_complex_list(DEFAULT_SWEEP_TARGET).expect("valid")),
        None => None,
    };
    let inferred = lambdas.as_ref().map(Vec::len).or(target.as_ref().map(Vec::len)).unwrap_or(2);
    let d = parse_num("d", get("d"), inferred)?;
    if d < 2 {
        return Err(field_err("d", "dimension must be at least 2"));
    }
    if let Some(l) = &lambdas {
        if l.len() != d {
            return Err(field_err("lambda", format!("{} entries for d = {d}", l.len())));
        }
    }
    if let Some(t) = &target {
        if t.len() != d {
            return Err(field_err("target", format!("{} entries for d = {d}", t.len())));
        }
    }
    let theta_min = get("theta-min")
        .map(|s| parse_angle(s).map_err(|e| field_err("theta-min", e)))
        .transpose()?
        .unwrap_or(0.0);
    let theta_max = get("theta-max")
        .map(|s| parse_angle(s).map_err(|e| field_err("theta-max", e)))
        .transpose()?
        .unwrap_or(PI / 4.0);
    let points = parse_num("points", get("points"), 21usize)?;
    let trials = parse_num("trials", get("trials"), if command == SubcommandKind::Sweep { 10_000u64 } else { 1 })?;
    let shots = parse_num("shots", get("shots"), 100_000u64)?;
    let seed = parse_num("seed", get("seed"), 0u64)?;
    let tolerance = parse_num("tolerance", get("tolerance"), DEFAULT_SUCCESS_TOL)?;
    if !(0.0..1.0).contains(&tolerance) {
        return Err(field_err("tolerance", "must lie in [0, 1)"));
    }
    let suite = match suite.unwrap_or("all") {
        "all" => Suite::All,
        "gates" => Suite::Gates,
        "protocols" => Suite::Protocols,
        "oracle" => Suite::Oracle,
        "tomo" => Suite::Tomo,
        other => return Err(field_err("suite", format!("unknown suite `{other}`"))),
    };

    match command {
        SubcommandKind::Run => {
            if target.is_none() {
                return Err(field_err("target", "required for `run`"));
            }
            if protocols.len() != 1 {
                return Err(field_err("protocol", "`run` takes a single protocol"));
            }
            if protocols[0] != Protocol::Nguyen && lambdas.is_none() {
                return Err(field_err("lambda", format!("required for the {} protocol", protocols[0])));
            }
        }
        SubcommandKind::Sweep => {
            if d != 2 {
                return Err(field_err("d", "sweeps run over qubit channels (d = 2)"));
            }
            if points == 0 {
                return Err(field_err("points", "need at least one grid point"));
            }
            if trials == 0 {
                return Err(field_err("trials", "need at least one trial"));
            }
            if theta_max < theta_min {
                return Err(field_err("theta-max", "must not be below --theta-min"));
            }
        }
        SubcommandKind::Tomo => {
            if d != 2 {
                return Err(field_err("d", "tomography is defined for qubits only"));
            }
            if target.is_none() {
                return Err(field_err("target", "required for `tomo`"));
            }
            if shots < 3 {
                return Err(field_err("shots", "need at least 3 shots"));
            }
        }
        SubcommandKind::Verify => {}
    }
    if protocols.iter().any(|&p| p != Protocol::Deterministic) && mode == Mode::Literal {
        return Err(field_err("mode", "literal mode applies to the deterministic protocol only"));
    }

    Ok(RunConfig {
        command,
        protocols,
        mode,
        d,
        lambdas,
        target,
        theta_min,
        theta_max,
        points,
        trials,
        shots,
        seed,
        out: get("out").map(PathBuf::from),
        tolerance,
        suite,
        inject_fault: get("inject-fault").map(str::to_string),
    })
}

/// Parses argv (including the program name) and an optional `--config` file.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| ConfigError(e.to_string()))?;
    match &cli.command {
        Command::Run(f) => build_config(SubcommandKind::Run, None, f),
        Command::Sweep(f) => build_config(SubcommandKind::Sweep, None, f),
        Command::Verify { suite, flags } => build_config(SubcommandKind::Verify, suite.as_deref(), flags),
        Command::Tomo(f) => build_config(SubcommandKind::Tomo, None, f),
    }
}

/// Captured result of one CLI invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct CliOutput {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl CliOutput {
    fn ok(stdout: String, code: i32) -> Self {
        Self {
            stdout,
            stderr: String::new(),
            code,
        }
    }

    fn err(stderr: String, code: i32) -> Self {
        Self {
            stdout: String::new(),
            stderr,
            code,
        }
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::InvalidState(_) | Error::Unsupported(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

pub fn run_cli<I, T>(args: I) -> CliOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliOutput::ok(text, EXIT_OK),
                _ => CliOutput::err(text, EXIT_CONFIG),
            };
        }
    };
    let config = match &cli.command {
        Command::Run(f) => build_config(SubcommandKind::Run, None, f),
        Command::Sweep(f) => build_config(SubcommandKind::Sweep, None, f),
        Command::Verify { suite, flags } => build_config(SubcommandKind::Verify, suite.as_deref(), flags),
        Command::Tomo(f) => build_config(SubcommandKind::Tomo, None, f),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => return CliOutput::err(format!("error: {e}\n"), EXIT_CONFIG),
    };
    let result = match config.command {
        SubcommandKind::Run => cmd_run(&config),
        SubcommandKind::Sweep => cmd_sweep(&config),
        SubcommandKind::Verify => Ok(cmd_verify(&config)),
        SubcommandKind::Tomo => cmd_tomo(&config),
    };
    match result {
        Ok((out, code)) => CliOutput::ok(out, code),
        Err(e) => CliOutput::err(format!("error: {e}\n"), error_code(&e)),
    }
}

fn channel_of(config: &RunConfig) -> Result<ChannelSpec, Error> {
    match (&config.lambdas, config.protocol()) {
        (Some(l), _) => ChannelSpec::new(l.clone()),
        (None, Protocol::Nguyen) => ChannelSpec::maximal(2),
        (None, _) => Err(Error::InvalidState("no channel given".into())),
    }
}

fn target_of(config: &RunConfig) -> Result<TargetState, Error> {
    let t = config
        .target
        .clone()
        .ok_or_else(|| Error::InvalidState("no target given".into()))?;
    TargetState::new(t)
}

/// Runs one protocol instance; prints the transcript and a summary line.
pub fn cmd_run(config: &RunConfig) -> Result<(String, i32), Error> {
    let channel = channel_of(config)?;
    let target = target_of(config)?;
    let mut rng = trial_rng(config.seed, &[]);
    let t = run_protocol(config.protocol(), &channel, &target, config.mode, &mut rng)?
        .with_success_tol(config.tolerance);
    let mut out = t.to_string();
    out.push_str(&t.summary_line());
    out.push('\n');
    // A failed run outside the documented failure modes means the simulator is wrong.
    let breach = !t.success && !t.aborted && config.mode == Mode::Repaired;
    Ok((out, if breach { EXIT_FAILURE } else { EXIT_OK }))
}

/// `%.12g`-style formatting for CSV values.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-5..12).contains(&exp) {
        format!("{}e{}{:02}", trim(mant.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    }
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub protocol: Protocol,
    pub mode: Mode,
    pub d: usize,
    pub trials: u64,
    pub successes: u64,
    pub est_prob: f64,
    pub exact_prob: f64,
    pub mean_fidelity: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_g12(self.theta),
            fmt_g12(self.alpha),
            fmt_g12(self.beta),
            self.protocol,
            self.mode,
            self.d,
            self.trials,
            self.successes,
            fmt_g12(self.est_prob),
            fmt_g12(self.exact_prob),
            fmt_g12(self.mean_fidelity),
            self.seed
        )
    }
}

pub fn theta_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    (0..points)
        .map(|i| min + (max - min) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Computes the sweep rows, sorted by `(protocol, theta)`.
pub fn sweep_rows(config: &RunConfig) -> Result<Vec<SweepRow>, Error> {
    let target = target_of(config)?;
    let grid = theta_grid(config.theta_min, config.theta_max, config.points);
    let mut protocols = config.protocols.clone();
    protocols.sort();
    protocols.dedup();
    let mut rows = Vec::new();
    for &protocol in &protocols {
        for (i, &theta) in grid.iter().enumerate() {
            let channel = match protocol {
                Protocol::Nguyen => ChannelSpec::maximal(2)?,
                _ => ChannelSpec::from_theta(theta)?,
            };
            let table = exact_outcome_table(protocol, &channel, &target, config.mode)?;
            let exact_prob = success_probability(&table, config.tolerance);
            let results = (0..config.trials)
                .into_par_iter()
                .map(|k| {
                    let mut rng = trial_rng(config.seed, &[i as u64, k]);
                    let t = run_protocol(protocol, &channel, &target, config.mode, &mut rng)?
                        .with_success_tol(config.tolerance);
                    Ok((t.success, if t.aborted { 0.0 } else { t.fidelity }))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let successes = results.iter().filter(|r| r.0).count() as u64;
            let mean_fidelity = results.iter().map(|r| r.1).sum::<f64>() / config.trials as f64;
            rows.push(SweepRow {
                theta,
                alpha: channel.alpha().norm(),
                beta: channel.beta().norm(),
                protocol,
                mode: config.mode,
                d: 2,
                trials: config.trials,
                successes,
                est_prob: successes as f64 / config.trials as f64,
                exact_prob,
                mean_fidelity,
                seed: config.seed,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Writes the sweep CSV to `--out`, or returns it when no path is given.
pub fn cmd_sweep(config: &RunConfig) -> Result<(String, i32), Error> {
    let rows = sweep_rows(config)?;
    let csv = sweep_csv(&rows);
    match &config.out {
        None => Ok((csv, EXIT_OK)),
        Some(path) => match std::fs::write(path, &csv) {
            Ok(()) => Ok((format!("wrote {} rows to {}\n", rows.len(), path.display()), EXIT_OK)),
            Err(e) => Err(Error::InvalidState(format!("cannot write `{}`: {e}", path.display()))),
        },
    }
}

/// One line of a verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub pass: bool,
}

fn check(name: &str, measured: impl Into<String>, pass: bool) -> Check {
    Check {
        name: name.into(),
        measured: measured.into(),
        pass,
    }
}

fn random_unit(d: usize, rng: &mut TrialRng) -> Vec<C64> {
    let v: Vec<C64> = (0..d)
        .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn random_target(d: usize, rng: &mut TrialRng) -> TargetState {
    TargetState::new(random_unit(d, rng)).expect("normalized")
}

/// Random channel with every Schmidt magnitude at least `floor` before normalization.
fn random_channel(d: usize, rng: &mut TrialRng) -> ChannelSpec {
    let v: Vec<C64> = (0..d)
        .map(|_| C64::from_polar(rng.random_range(0.05..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ChannelSpec::new(v.into_iter().map(|z| z / n).collect()).expect("normalized")
}

fn random_qubit_channel_ordered(rng: &mut TrialRng) -> ChannelSpec {
    ChannelSpec::from_theta(rng.random_range(0.0..PI / 4.0)).expect("normalized")
}

fn gates_suite(seed: u64, fault: Option<&str>) -> Vec<Check> {
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    let mut action_ok = true;
    for d in 2..=8 {
        let mut cadd = ShiftTable::cadd(d);
        if fault == Some("gate-table") {
            // corrupted fixture: control 1 no longer shifts
            let mut shifts = cadd.shifts().to_vec();
            shifts[1] = 0;
            cadd = ShiftTable::new(d, shifts).expect("in range");
        }
        for (table, sign) in [(cadd, 1usize), (ShiftTable::csub(d), d - 1)] {
            let g = controlled_shift(d, &table);
            worst = worst.max(g.defect());
            for i in 0..d {
                for j in 0..d {
                    let out = g.matrix().apply(&CVec::basis(d * d, i * d + j).expect("index")).expect("dims");
                    let want = i * d + (j + sign * i) % d;
                    if out != CVec::basis(d * d, want).expect("index") {
                        action_ok = false;
                    }
                }
            }
        }
    }
    out.push(check("controlled-shift-unitary", format!("max defect {worst:.3e}"), worst <= 1e-12));
    out.push(check(
        "controlled-shift-action",
        if action_ok { "CADD/CSUB tables exact for d = 2..8" } else { "table maps a basis state wrongly" },
        action_ok,
    ));

    let mut order_err: f64 = 0.0;
    for d in 2..=8 {
        for g in [pauli_x(d), pauli_z(d)] {
            let p = (0..d).fold(CMat::identity(d), |acc, _| acc.matmul(g.matrix()).expect("square"));
            order_err = order_err.max(p.max_abs_diff(&CMat::identity(d)));
        }
    }
    out.push(check("shift-clock-order", format!("max |X^d − I|, |Z^d − I| = {order_err:.3e}"), order_err <= 1e-12));

    let mut rng = trial_rng(seed, &[0xA1]);
    let mut enc_defect: f64 = 0.0;
    let mut corr_err: f64 = 0.0;
    for d in 2..=8 {
        for _ in 0..5 {
            let t = random_target(d, &mut rng);
            let u = encoding_unitary(&t).expect("valid target");
            enc_defect = enc_defect.max(u.defect());
            for m in 0..d {
                let v = correction_unitary(&u, m).expect("unitary encoder");
                let mut raw = vec![C64::default(); d];
                for n in 0..d {
                    raw[(m + d - n) % d] += u.matrix()[(n, m)];
                }
                let fixed = v.matrix().apply(&CVec::new(raw).expect("entries")).expect("dims");
                corr_err = corr_err.max(fixed.max_abs_diff(&t.as_cvec()));
            }
        }
    }
    out.push(check("encoder-unitary", format!("max defect {enc_defect:.3e}"), enc_defect <= 1e-10));
    out.push(check("correction-exact", format!("max residual {corr_err:.3e}"), corr_err <= 1e-10));

    let mut lit_err: f64 = 0.0;
    let mut endpoints: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let x0 = i as f64 / 9.0;
            let x1 = (1.0 - x0 * x0).max(0.0).sqrt();
            let theta = j as f64 * 2.0 * PI / 9.0;
            let g = encoding_unitary_literal(x0, x1, theta);
            lit_err = lit_err.max((g.defect() - literal_defect_closed_form(x0, x1, theta)).abs());
            for th in [0.0, PI] {
                endpoints = endpoints.max(encoding_unitary_literal(x0, x1, th).defect());
            }
        }
    }
    out.push(check("literal-defect-closed-form", format!("max deviation {lit_err:.3e}"), lit_err <= 1e-10));
    out.push(check("literal-defect-endpoints", format!("max defect at θ ∈ {{0, π}} {endpoints:.3e}"), endpoints <= 1e-12));

    let mut basis_defect: f64 = 0.0;
    for _ in 0..20 {
        let a: f64 = rng.random_range(0.0..1.0);
        let (mu, nu, p) = nguyen_bases(a, (1.0 - a * a).sqrt(), rng.random_range(0.0..2.0 * PI)).expect("normalized");
        basis_defect = basis_defect.max(unitarity_defect(&mu)).max(unitarity_defect(&nu)).max(p.defect());
    }
    out.push(check("measurement-bases-orthonormal", format!("max defect {basis_defect:.3e}"), basis_defect <= 1e-12));
    out
}

fn protocols_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = trial_rng(seed, &[0xB2]);
    for d in [2, 3, 4, 5, 8] {
        let mut min_f: f64 = 1.0;
        let mut sum_err: f64 = 0.0;
        for _ in 0..10 {
            let ch = random_channel(d, &mut rng);
            let t = random_target(d, &mut rng);
            match exact_outcome_table(Protocol::Deterministic, &ch, &t, Mode::Repaired) {
                Ok(table) => {
                    sum_err = sum_err.max((table.total_probability() - 1.0).abs());
                    for r in table.rows.iter().filter(|r| r.probability > 0.0) {
                        min_f = min_f.min(r.fidelity.unwrap_or(0.0));
                    }
                }
                Err(_) => min_f = 0.0,
            }
        }
        out.push(check(
            &format!("deterministic-d{d}"),
            format!("min fidelity {min_f:.12}, max |Σp − 1| {sum_err:.3e}"),
            min_f >= 1.0 - 1e-10 && sum_err <= 1e-12,
        ));
    }

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let t = random_target(2, &mut rng);
        let ch = ChannelSpec::maximal(2).expect("valid");
        match exact_outcome_table(Protocol::Nguyen, &ch, &t, Mode::Repaired) {
            Ok(table) => {
                for r in &table.rows {
                    worst = worst
                        .max((r.probability - 0.25).abs())
                        .max(1.0 - r.fidelity.unwrap_or(0.0));
                }
            }
            Err(_) => worst = 1.0,
        }
    }
    out.push(check("nguyen-quarter-branches", format!("max deviation {worst:.3e}"), worst <= 1e-12));

    let mut worst: f64 = 0.0;
    let t = random_target(2, &mut rng);
    for theta in theta_grid(0.0, PI / 4.0, 21) {
        let ch = ChannelSpec::from_theta(theta).expect("valid");
        let p = exact_outcome_table(Protocol::Probabilistic, &ch, &t, Mode::Repaired)
            .map(|table| success_probability(&table, DEFAULT_SUCCESS_TOL))
            .unwrap_or(f64::NAN);
        let err = (p - 2.0 * theta.sin().powi(2)).abs();
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    out.push(check("probabilistic-2sin2", format!("max |P − 2sin²θ| {worst:.3e}"), worst <= 1e-12));

    let mut worst: f64 = 0.0;
    for theta in theta_grid(1e-6, PI / 2.0 - 1e-6, 21) {
        let ch = ChannelSpec::from_theta(theta).expect("valid");
        let p = exact_outcome_table(Protocol::Deterministic, &ch, &t, Mode::Repaired)
            .map(|table| success_probability(&table, DEFAULT_SUCCESS_TOL))
            .unwrap_or(f64::NAN);
        let err = (p - 1.0).abs();
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    out.push(check("deterministic-channel-independent", format!("max |P − 1| {worst:.3e}"), worst <= 1e-12));
    out
}

fn oracle_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = trial_rng(seed, &[0xC3]);
    for protocol in [Protocol::Deterministic, Protocol::Probabilistic, Protocol::Nguyen] {
        let dims: &[usize] = if protocol == Protocol::Deterministic { &[2, 3, 4] } else { &[2] };
        for &d in dims {
            let mut worst: f64 = 0.0;
            let mut ok = true;
            for _ in 0..10 {
                let ch = match protocol {
                    Protocol::Probabilistic => random_qubit_channel_ordered(&mut rng),
                    _ => random_channel(d, &mut rng),
                };
                let t = random_target(d, &mut rng);
                let result = exact_outcome_table(protocol, &ch, &t, Mode::Repaired).and_then(|fast| {
                    let fast = BranchDistribution::from_table(&fast, &ch, &t);
                    compare_exact(&fast, &enumerate_naive(protocol, &ch, &t, Mode::Repaired)?)
                });
                match result {
                    Ok(r) => {
                        worst = worst.max(r.max_score);
                        ok &= r.pass;
                    }
                    Err(_) => ok = false,
                }
            }
            out.push(check(
                &format!("naive-vs-fast-{protocol}-d{d}"),
                format!("max diff {worst:.3e}"),
                ok,
            ));
        }
    }
    let t = TargetState::new(random_unit(2, &mut rng)).expect("normalized");
    let cases = [
        (Protocol::Deterministic, ChannelSpec::qubit(0.6, 0.8).expect("valid")),
        (Protocol::Probabilistic, ChannelSpec::qubit(0.6, 0.8).expect("valid")),
        (Protocol::Nguyen, ChannelSpec::maximal(2).expect("valid")),
    ];
    for (k, (protocol, ch)) in cases.into_iter().enumerate() {
        let result = enumerate_naive(protocol, &ch, &t, Mode::Repaired)
            .and_then(|dist| compare_sampled(&dist, 10_000, derive_seed(seed, &[0xC4, k as u64])));
        let (measured, pass) = match result {
            Ok(r) => (format!("max |z| {:.3} over 10000 trials", r.max_score), r.pass),
            Err(e) => (e.to_string(), false),
        };
        out.push(check(&format!("sampler-4sigma-{protocol}"), measured, pass));
    }
    out
}

fn tomo_suite(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut physical = true;
    let steps = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    for &x in &steps {
        for &y in &steps {
            for &z in &steps {
                let rho = reconstruct_qubit(&PauliEstimates {
                    rx: x,
                    ry: y,
                    rz: z,
                    shots: [1, 1, 1],
                });
                physical &= rho.check_invariants(1e-10).is_ok();
            }
        }
    }
    out.push(check("reconstruction-physical", format!("{} grid points", steps.len().pow(3)), physical));

    let mut rng = trial_rng(seed, &[0xD4]);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let psi = CVec::new(random_unit(2, &mut rng)).expect("entries");
        let rho = DensityMatrix::from_pure(&psi).expect("normalized");
        let r = bloch_vector(&rho).expect("qubit");
        let (x0, x1) = (psi[0], psi[1]);
        let canon = x1 * x0.conj();
        let want = [2.0 * canon.re, 2.0 * canon.im, x0.norm_sqr() - x1.norm_sqr()];
        for k in 0..3 {
            worst = worst.max((r[k] - want[k]).abs());
        }
    }
    out.push(check("bloch-formulas", format!("max deviation {worst:.3e}"), worst <= 1e-12));

    let mut good = 0;
    let n = 10;
    let mut max_td: f64 = 0.0;
    for k in 0..n {
        let psi = CVec::new(random_unit(2, &mut rng)).expect("entries");
        let mut trial = trial_rng(seed, &[0xD5, k]);
        if let Ok(res) = tomograph(&psi, &psi, 100_000, &mut trial) {
            max_td = max_td.max(res.trace_distance_to_target);
            if res.trace_distance_to_target <= 0.02 && res.rho.check_invariants(1e-10).is_ok() {
                good += 1;
            }
        }
    }
    out.push(check(
        "tomography-1e5-shots",
        format!("{good}/{n} within trace distance 0.02 (max {max_td:.4})"),
        good * 100 >= 95 * n,
    ));

    let zero = CVec::basis(2, 0).expect("basis");
    let rz = sample_pauli_expectations(&zero, 300, &mut trial_rng(seed, &[0xD6]))
        .map(|e| e.rz)
        .unwrap_or(f64::NAN);
    out.push(check("tomography-eigenstate", format!("r̂z = {rz}"), rz == 1.0));
    out
}

/// Runs the requested suites; exit 0 iff every check passes.
pub fn cmd_verify(config: &RunConfig) -> (String, i32) {
    let fault = config.inject_fault.as_deref();
    let suites: Vec<(&str, Vec<Check>)> = match config.suite {
        Suite::All => vec![
            ("gates", gates_suite(config.seed, fault)),
            ("protocols", protocols_suite(config.seed)),
            ("oracle", oracle_suite(config.seed)),
            ("tomo", tomo_suite(config.seed)),
        ],
        Suite::Gates => vec![("gates", gates_suite(config.seed, fault))],
        Suite::Protocols => vec![("protocols", protocols_suite(config.seed))],
        Suite::Oracle => vec![("oracle", oracle_suite(config.seed))],
        Suite::Tomo => vec![("tomo", tomo_suite(config.seed))],
    };
    let mut text = String::new();
    let mut failed = Vec::new();
    for (name, checks) in &suites {
        let _ = writeln!(text, "[{name}]");
        for ch in checks {
            let _ = writeln!(text, "  {} {}: {}", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.measured);
            if !ch.pass {
                failed.push(ch.name.clone());
            }
        }
    }
    let total: usize = suites.iter().map(|(_, c)| c.len()).sum();
    if failed.is_empty() {
        let _ = writeln!(text, "verify: {total} checks passed (seed {})", config.seed);
        (text, EXIT_OK)
    } else {
        let _ = writeln!(text, "verify: {} of {total} checks failed: {}", failed.len(), failed.join(", "));
        (text, EXIT_FAILURE)
    }
}

/// Runs the deterministic protocol and tomographs Bob's corrected qubit.
pub fn cmd_tomo(config: &RunConfig) -> Result<(String, i32), Error> {
    if config.d != 2 {
        return Err(Error::InvalidState("tomography is defined for qubits only".into()));
    }
    let channel = match &config.lambdas {
        Some(l) => ChannelSpec::new(l.clone())?,
        None => ChannelSpec::new(parse_complex_list(DEFAULT_TOMO_CHANNEL).expect("valid"))?,
    };
    let target = target_of(config)?;
    let t = run_protocol(Protocol::Deterministic, &channel, &target, config.mode, &mut trial_rng(config.seed, &[]))?;
    let res = tomograph(&t.bob_state, &t.bob_state, config.shots, &mut trial_rng(config.seed, &[1]))?;
    let fid_target = crate::tomography::fidelity_mixed(&res.rho, &target.as_cvec())?;
    let exact = DensityMatrix::from_pure(&t.bob_state)?;
    let td = trace_distance(&res.rho, &exact)?;
    let physical = res.rho.check_invariants(1e-10).is_ok();
    let mut out = String::new();
    let _ = writeln!(out, "protocol: deterministic ({}), outcome {:?}", config.mode, t.outcome());
    let _ = writeln!(out, "Bob state (exact): {}", t.bob_state);
    let _ = writeln!(
        out,
        "shots: {} (X {}, Y {}, Z {})",
        res.shots, res.estimates.shots[0], res.estimates.shots[1], res.estimates.shots[2]
    );
    let _ = writeln!(
        out,
        "estimates: rx = {:.6}, ry = {:.6}, rz = {:.6}",
        res.estimates.rx, res.estimates.ry, res.estimates.rz
    );
    let _ = writeln!(out, "reconstructed rho:");
    for line in res.rho.matrix().to_string().lines() {
        let _ = writeln!(out, "  {line}");
    }
    let _ = writeln!(out, "fidelity to target: {fid_target:.6}");
    let _ = writeln!(out, "trace distance to exact: {td:.6}");
    let _ = writeln!(out, "physical: {physical}");
    let _ = writeln!(
        out,
        "summary shots={} fidelity={:.6} trace_distance={:.6} physical={}",
        res.shots, fid_target, td, physical
    );
    Ok((out, if physical { EXIT_OK } else { EXIT_FAILURE }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("rsp".to_string())
            .chain(s.split_whitespace().map(str::to_string))
            .collect()
    }

    #[test]
    fn complex_tokens() {
        assert_eq!(parse_complex("0.6").unwrap(), c(0.6, 0.0));
        assert_eq!(parse_complex("0,-0.8").unwrap(), c(0.0, -0.8));
        assert!(parse_complex("a,b").is_err());
        assert!(parse_complex("1,2,3").is_err());
    }

    #[test]
    fn lists_are_renormalized() {
        let v = parse_complex_list("0.6:0.799999").unwrap();
        let n: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-15);
        assert!(parse_complex_list("0.6:0.7").is_err());
    }

    #[test]
    fn angles() {
        assert!((parse_angle("pi/4").unwrap() - PI / 4.0).abs() < 1e-15);
        assert!((parse_angle("-3pi/8").unwrap() + 3.0 * PI / 8.0).abs() < 1e-15);
        assert!((parse_angle("3*pi/8").unwrap() - 3.0 * PI / 8.0).abs() < 1e-15);
        assert_eq!(parse_angle("0.25").unwrap(), 0.25);
        assert!(parse_angle("pie").is_err());
    }

    #[test]
    fn g12_formatting() {
        assert_eq!(fmt_g12(1.0), "1");
        assert_eq!(fmt_g12(0.5), "0.5");
        assert_eq!(fmt_g12(PI / 4.0), "0.785398163397");
        assert_eq!(fmt_g12(1e-7), "1e-07");
        assert_eq!(fmt_g12(0.0), "0");
        assert_eq!(fmt_g12(-0.125), "-0.125");
        assert_eq!(fmt_g12(0.0761204674887), "0.0761204674887");
    }

    #[test]
    fn config_example() {
        let cfg = parse_config(argv(
            "run --protocol deterministic --d 2 --lambda 0.6,0:0.8,0 --target 0.6,0:0,0.8 --seed 42",
        ))
        .unwrap();
        assert_eq!(cfg.protocol(), Protocol::Deterministic);
        assert_eq!(cfg.lambdas.unwrap(), vec![c(0.6, 0.0), c(0.8, 0.0)]);
        assert_eq!(cfg.target.unwrap(), vec![c(0.6, 0.0), c(0.0, 0.8)]);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn missing_target_names_field() {
        let err = parse_config(argv("run --lambda 0.6:0.8")).unwrap_err();
        assert!(err.0.contains("--target"), "{err}");
    }

    #[test]
    fn dimension_mismatch_names_field() {
        let err = parse_config(argv("run --d 3 --lambda 0.6:0.8 --target 1:0")).unwrap_err();
        assert!(err.0.contains("--lambda"), "{err}");
    }
}
