//! Command-line front end: single evaluations and `d` sweeps as CSV or JSON.
//!
//! Flags may also come from a TOML file given with `--config`, using the flag
//! names without dashes as keys (`lambda = 1.0`, `d-range = "2..59"`).
//! Command-line flags override file values.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx_ph::mean_lifetime_approx;
use crate::error::Error as ModelError;
use crate::model::{validate_params, Method, ModelParams};
use crate::montecarlo::{simulate_lifetime, SimConfig, SimInitial, SimModel};
use crate::qbd::{mean_lifetime_qbd, InitialAssignment};
use crate::stationary::poisson_stationary;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 42;
/// Replication rate used when `--mu` is not given.
pub const DEFAULT_MU: f64 = 1.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid run specification: {0}")]
    InvalidSpec(String),
    #[error("{method} failed at d = {d}: {source}")]
    Evaluation {
        d: usize,
        method: Method,
        #[source]
        source: ModelError,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            _ => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::InvalidSpec(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stationary,
    Approx,
    Qbd,
    Simulate,
    Sweep,
}

/// A fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    /// `d` here is the single requested value, or the low end of the range.
    pub params: ModelParams,
    pub d_range: Option<(usize, usize)>,
    pub tol: f64,
    pub samples: u64,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl RunSpec {
    pub fn d_values(&self) -> Vec<usize> {
        match self.d_range {
            Some((lo, hi)) => (lo..=hi).collect(),
            None => vec![self.params.d()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub mean_approx: Option<f64>,
    pub mean_qbd: Option<f64>,
    pub mean_sim: Option<f64>,
    pub sim_se: Option<f64>,
    #[serde(rename = "L_max")]
    pub l_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRow {
    pub k: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Sweep(Vec<SweepRow>),
    Stationary(Vec<StationaryRow>),
}

impl Table {
    pub fn is_empty(&self) -> bool {
        match self {
            Table::Sweep(r) => r.is_empty(),
            Table::Stationary(r) => r.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Methods {
    approx: bool,
    qbd: bool,
    sim: bool,
}

fn methods_for(spec: &RunSpec) -> Result<Methods, CliError> {
    let m = match spec.command {
        Command::Approx => Methods {
            approx: true,
            qbd: false,
            sim: false,
        },
        Command::Qbd => Methods {
            approx: false,
            qbd: true,
            sim: false,
        },
        Command::Simulate => {
            if spec.samples == 0 {
                return Err(CliError::InvalidSpec("simulate needs --samples > 0".into()));
            }
            Methods {
                approx: false,
                qbd: false,
                sim: true,
            }
        }
        Command::Sweep => Methods {
            approx: true,
            qbd: true,
            sim: spec.samples > 0,
        },
        Command::Stationary => {
            return Err(CliError::InvalidSpec(
                "stationary has no sweep table".into(),
            ))
        }
    };
    Ok(m)
}

fn evaluate_point(spec: &RunSpec, methods: Methods, d: usize) -> Result<SweepRow, CliError> {
    let at = |method: Method| move |source: ModelError| CliError::Evaluation { d, method, source };
    let params = spec.params.with_d(d).map_err(at(Method::Qbd))?;
    let mut row = SweepRow {
        d,
        mean_approx: None,
        mean_qbd: None,
        mean_sim: None,
        sim_se: None,
        l_max: None,
    };
    if methods.approx {
        row.mean_approx = Some(
            mean_lifetime_approx(&params, None)
                .map_err(at(Method::ApproxPh))?
                .mean,
        );
    }
    if methods.qbd {
        let report = mean_lifetime_qbd(&params, &InitialAssignment::default(), spec.tol)
            .map_err(at(Method::Qbd))?;
        row.mean_qbd = Some(report.mean);
        row.l_max = report.meta.truncation_level;
    }
    if methods.sim {
        let result = simulate_lifetime(&SimConfig {
            params,
            model: SimModel::Physical2d,
            samples: spec.samples,
            seed: spec.seed,
            initial: SimInitial::StationaryOneCopy,
        })
        .map_err(at(Method::Simulation))?;
        row.mean_sim = Some(result.mean);
        row.sim_se = Some(result.std_error);
    }
    Ok(row)
}

/// Evaluates the requested methods at every `d`; rows come back ordered by `d`.
pub fn run_sweep(spec: &RunSpec) -> Result<Vec<SweepRow>, CliError> {
    let methods = methods_for(spec)?;
    spec.d_values()
        .par_iter()
        .map(|&d| evaluate_point(spec, methods, d))
        .collect()
}

pub fn run_stationary(spec: &RunSpec) -> Result<Vec<StationaryRow>, CliError> {
    let dist = poisson_stationary(&spec.params, spec.tol)?;
    Ok(dist
        .probs
        .iter()
        .enumerate()
        .map(|(k, &theta)| StationaryRow { k, theta })
        .collect())
}

pub fn run_spec(spec: &RunSpec) -> Result<Table, CliError> {
    match spec.command {
        Command::Stationary => run_stationary(spec).map(Table::Stationary),
        _ => run_sweep(spec).map(Table::Sweep),
    }
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_fraction(mantissa.to_string()))
    }
}

fn trim_fraction(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn round_sig(x: f64) -> f64 {
    format_sig(x).parse().unwrap_or(x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

pub fn render(table: &Table, format: OutputFormat) -> Result<String, CliError> {
    if table.is_empty() {
        return Err(CliError::InvalidSpec(
            "nothing to write: the table is empty".into(),
        ));
    }
    match format {
        OutputFormat::Csv => render_csv(table),
        OutputFormat::Json => render_json(table),
    }
}

fn render_csv(table: &Table) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    match table {
        Table::Sweep(rows) => {
            w.write_record([
                "d",
                "mean_approx",
                "mean_qbd",
                "mean_sim",
                "sim_se",
                "L_max",
            ])
            .map_err(io)?;
            for r in rows {
                w.write_record([
                    r.d.to_string(),
                    opt_num(r.mean_approx),
                    opt_num(r.mean_qbd),
                    opt_num(r.mean_sim),
                    opt_num(r.sim_se),
                    r.l_max.map(|l| l.to_string()).unwrap_or_default(),
                ])
                .map_err(io)?;
            }
        }
        Table::Stationary(rows) => {
            w.write_record(["k", "theta"]).map_err(io)?;
            for r in rows {
                w.write_record([r.k.to_string(), format_sig(r.theta)])
                    .map_err(io)?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(std::io::Error::other(e)))
}

fn render_json(table: &Table) -> Result<String, CliError> {
    let json = match table {
        Table::Sweep(rows) => {
            let rounded: Vec<SweepRow> = rows
                .iter()
                .map(|r| SweepRow {
                    mean_approx: r.mean_approx.map(round_sig),
                    mean_qbd: r.mean_qbd.map(round_sig),
                    mean_sim: r.mean_sim.map(round_sig),
                    sim_se: r.sim_se.map(round_sig),
                    ..r.clone()
                })
                .collect();
            serde_json::to_string_pretty(&rounded)
        }
        Table::Stationary(rows) => {
            let rounded: Vec<StationaryRow> = rows
                .iter()
                .map(|r| StationaryRow {
                    k: r.k,
                    theta: round_sig(r.theta),
                })
                .collect();
            serde_json::to_string_pretty(&rounded)
        }
    };
    let mut s = json.map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    s.push('\n');
    Ok(s)
}

/// Parses a JSON sweep table as written by [`emit`].
pub fn parse_json_table(text: &str) -> Result<Vec<SweepRow>, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::InvalidSpec(format!("bad table: {e}")))
}

/// Writes the whole table at once; nothing is written if rendering fails.
pub fn emit(table: &Table, format: OutputFormat, path: Option<&Path>) -> Result<(), CliError> {
    let text = render(table, format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "filelife",
    version,
    about = "File lifetime in replicated data-center networks"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Stationary law of the number of live centers.
    Stationary(Flags),
    /// Approximate phase-type mean lifetime.
    Approx(Flags),
    /// Exact QBD mean lifetime.
    Qbd(Flags),
    /// Monte Carlo estimate on the physical chain.
    Simulate(Flags),
    /// All methods over a range of d.
    Sweep(Flags),
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct Flags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, conflicts_with = "d_range")]
    d: Option<usize>,
    /// Inclusive range `LO..HI`.
    #[arg(long)]
    d_range: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Flags {
    fn merged_over(self, base: Flags) -> Flags {
        // A range on the command line replaces a single d from the file, and vice versa.
        let (d, d_range) = if self.d.is_some() || self.d_range.is_some() {
            (self.d, self.d_range)
        } else {
            (base.d, base.d_range)
        };
        Flags {
            lambda: self.lambda.or(base.lambda),
            beta: self.beta.or(base.beta),
            mu: self.mu.or(base.mu),
            d,
            d_range,
            tol: self.tol.or(base.tol),
            samples: self.samples.or(base.samples),
            seed: self.seed.or(base.seed),
            format: self.format.or(base.format),
            out: self.out.or(base.out),
            config: None,
        }
    }
}

pub fn parse_d_range(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::InvalidSpec(format!("d-range must look like LO..HI, got {text:?}"));
    let (lo, hi) = text.trim().split_once("..").ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(CliError::InvalidSpec(format!(
            "d-range must be ascending with LO >= 1, got {lo}..{hi}"
        )));
    }
    Ok((lo, hi))
}

fn load_config(path: &Path) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::InvalidSpec(format!("{}: {e}", path.display())))
}

fn resolve(command: Command, flags: Flags) -> Result<RunSpec, CliError> {
    let flags = match &flags.config {
        Some(path) => {
            let base = load_config(path)?;
            flags.merged_over(base)
        }
        None => flags,
    };
    if flags.d.is_some() && flags.d_range.is_some() {
        return Err(CliError::InvalidSpec(
            "give either d or d-range, not both".into(),
        ));
    }
    let missing = |name: &str| CliError::InvalidSpec(format!("--{name} is required"));
    let lambda = flags.lambda.ok_or_else(|| missing("lambda"))?;
    let beta = flags.beta.ok_or_else(|| missing("beta"))?;
    let mu = flags.mu.unwrap_or(DEFAULT_MU);
    let d_range = flags.d_range.as_deref().map(parse_d_range).transpose()?;
    let d = match (flags.d, d_range, command) {
        (Some(d), _, _) => d,
        (None, Some((lo, _)), _) => lo,
        (None, None, Command::Stationary) => 1,
        (None, None, _) => return Err(missing("d (or --d-range)")),
    };
    let params = validate_params(lambda, beta, mu, d)?;
    if let Some((_, hi)) = d_range {
        params.with_d(hi)?;
    }
    let tol = flags.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::InvalidSpec(format!(
            "tol must lie in (0, 1), got {tol}"
        )));
    }
    Ok(RunSpec {
        command,
        params,
        d_range,
        tol,
        samples: flags.samples.unwrap_or(0),
        seed: flags.seed.unwrap_or(DEFAULT_SEED),
        format: flags.format.unwrap_or(OutputFormat::Csv),
        out: flags.out,
    })
}

/// Parses arguments (including the program name) into a [`RunSpec`].
pub fn parse_args<I, T>(args: I) -> Result<RunSpec, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
    let (command, flags) = match cli.command {
        CliCommand::Stationary(f) => (Command::Stationary, f),
        CliCommand::Approx(f) => (Command::Approx, f),
        CliCommand::Qbd(f) => (Command::Qbd, f),
        CliCommand::Simulate(f) => (Command::Simulate, f),
        CliCommand::Sweep(f) => (Command::Sweep, f),
    };
    resolve(command, flags)
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // Help and version go to stdout with success.
    if let Err(e) = Cli::try_parse_from(&args) {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            print!("{e}");
            return 0;
        }
    }
    let result = parse_args(&args).and_then(|spec| {
        let table = run_spec(&spec)?;
        emit(&table, spec.format, spec.out.as_deref())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("filelife: {e}");
            e.exit_code()
        }
    }
}
