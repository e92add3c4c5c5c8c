//! Batch front end. A JSON task file names one analysis and its parameters;
//! the run writes a report plus any CSV artifacts into an output directory.

mod tasks;

use crate::error::{Error, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub use tasks::{classify_rate, mean_rate, RateClass};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "ISSKIT_OUT";
/// Used when neither flag, config nor environment names one.
pub const DEFAULT_OUT: &str = "isskit-out";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "isskit", version, about = "Small-gain, Lyapunov and ISS checks driven by JSON task files")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Task file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to the task file, then $ISSKIT_OUT, then ./isskit-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the task file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the task tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// small-gain, spectral-radius and kleene-star tasks.
    Gain(Common),
    /// omega-path and compose-lf tasks.
    Net(Common),
    /// simulate, dissipation, envelope and ensemble tasks.
    Sim(Common),
    /// threshold-sweep tasks.
    Sweep(Common),
    /// Any task; the full report is also printed to stdout.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gain(c) | Command::Net(c) | Command::Sim(c) | Command::Sweep(c) | Command::Report(c) => c,
        }
    }

    fn accepts(&self, kind: TaskKind) -> bool {
        use TaskKind::*;
        match self {
            Command::Gain(_) => matches!(kind, SmallGain | SpectralRadius | KleeneStar),
            Command::Net(_) => matches!(kind, OmegaPath | ComposeLf),
            Command::Sim(_) => matches!(kind, Simulate | Dissipation | Envelope | Ensemble),
            Command::Sweep(_) => kind == ThresholdSweep,
            Command::Report(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SmallGain,
    SpectralRadius,
    KleeneStar,
    OmegaPath,
    ComposeLf,
    Simulate,
    Dissipation,
    Envelope,
    ThresholdSweep,
    Ensemble,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SmallGain => "small-gain",
            TaskKind::SpectralRadius => "spectral-radius",
            TaskKind::KleeneStar => "kleene-star",
            TaskKind::OmegaPath => "omega-path",
            TaskKind::ComposeLf => "compose-lf",
            TaskKind::Simulate => "simulate",
            TaskKind::Dissipation => "dissipation",
            TaskKind::Envelope => "envelope",
            TaskKind::ThresholdSweep => "threshold-sweep",
            TaskKind::Ensemble => "ensemble",
        }
    }
}

/// Top level of a task file. Parameters are given inline (`params`) or in a
/// separate JSON file (`input`, relative to the task file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
}

/// Written as `<task>.report.json`. Contains nothing run-dependent beyond
/// its inputs, so equal inputs give byte-equal reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub tool_version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// sha256 over the task file bytes, then the input file bytes if any.
    pub inputs_digest: String,
    pub outcome: Outcome,
    pub verdicts: BTreeMap<String, String>,
    pub margins: BTreeMap<String, f64>,
    pub caveats: Vec<String>,
    pub artifacts: Vec<String>,
    pub details: serde_json::Value,
}

/// A file produced next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub(crate) struct TaskResult {
    pub pass: bool,
    pub verdicts: BTreeMap<String, String>,
    pub margins: BTreeMap<String, f64>,
    pub caveats: Vec<String>,
    pub details: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parse a task file and load its parameters. Returns the spec, the resolved
/// parameters and the digest of everything read.
pub fn load_task(config: &Path) -> Result<(TaskSpec, serde_json::Value, String)> {
    let raw = read(config)?;
    let spec: TaskSpec =
        serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    match (&spec.input, &spec.params) {
        (Some(_), Some(_)) => Err(Error::Config("give either input or params, not both".into())),
        (None, None) => Err(Error::Config("task needs input or params".into())),
        (None, Some(p)) => Ok((spec.clone(), p.clone(), digest(&[&raw]))),
        (Some(rel), None) => {
            let path = config.parent().unwrap_or(Path::new(".")).join(rel);
            let bytes = read(&path)?;
            let params =
                serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok((spec.clone(), params, digest(&[&raw, &bytes])))
        }
    }
}

/// Run a parsed task. `seed` and `tol` are the effective values after
/// command-line overrides.
pub fn execute(
    kind: TaskKind,
    params: &serde_json::Value,
    seed: u64,
    tol: Option<f64>,
    inputs_digest: String,
) -> Result<(Report, Vec<Artifact>)> {
    if let Some(t) = tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Config(format!("tol must be finite and >= 0, got {t}")));
        }
    }
    let r = tasks::dispatch(kind, params, seed, tol)?;
    let report = Report {
        task: kind.name().into(),
        tool_version: TOOL_VERSION.into(),
        seed,
        tol,
        inputs_digest,
        outcome: if r.pass { Outcome::Pass } else { Outcome::Fail },
        verdicts: r.verdicts,
        margins: r.margins,
        caveats: r.caveats,
        artifacts: r.artifacts.iter().map(|a| a.name.clone()).collect(),
        details: r.details,
    };
    Ok((report, r.artifacts))
}

/// Write to a sibling temp file, then rename into place.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn out_dir(flag: Option<&PathBuf>, spec: &TaskSpec) -> PathBuf {
    flag.cloned()
        .or_else(|| spec.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn report_json(report: &Report) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string())).map(|s| s + "\n")
}

/// Parse, run and write. Returns the report and the directory it went to.
pub fn run(cmd: &Command) -> Result<(Report, PathBuf)> {
    let c = cmd.common();
    let (spec, params, dig) = load_task(&c.config)?;
    if !cmd.accepts(spec.task) {
        return Err(Error::Config(format!("task {} is not handled by this subcommand", spec.task.name())));
    }
    let seed = c.seed.unwrap_or(spec.seed);
    let tol = c.tol.or(spec.tol);
    let (report, artifacts) = execute(spec.task, &params, seed, tol, dig)?;
    let dir = out_dir(c.out.as_ref(), &spec);
    fs::create_dir_all(&dir)?;
    for a in &artifacts {
        write_atomic(&dir, &a.name, &a.bytes)?;
    }
    write_atomic(&dir, &format!("{}.report.json", report.task), report_json(&report)?.as_bytes())?;
    Ok((report, dir))
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Divergence(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Entry point of the binary: runs the command and maps the result to an
/// exit code.
pub fn main_with(cli: Cli) -> u8 {
    let print_full = matches!(cli.command, Command::Report(_));
    match run(&cli.command) {
        Ok((report, dir)) => {
            if print_full {
                if let Ok(s) = report_json(&report) {
                    print!("{s}");
                }
            } else {
                let verdict = if report.outcome == Outcome::Pass { "PASS" } else { "FAIL" };
                println!("{}: {verdict} ({})", report.task, dir.display());
            }
            if report.outcome == Outcome::Pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("isskit: {e}");
            exit_code(&e)
        }
    }
}
