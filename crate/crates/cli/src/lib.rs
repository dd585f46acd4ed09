//! Command implementations behind the `delayrate` binary.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use delayrate::consensus::{consensus_run_with, laplacian, load_digraph, reduce_with, ConsensusOptions, ConsensusReport};
use delayrate::curves::{c0_curve, lambda_curve, level_set};
use delayrate::dde_sim::{default_horizon, estimate_decay_rate, fmt17, simulate, PreShape};
use delayrate::delay_analysis::{
    analyze_with, rate_of_convergence, rate_profile, SystemDelayAnalysis, Tolerances, DEFAULT_ROOT_TOL,
};
use delayrate::spectrum::{eigenvalues_with_tol, ComplexEntry, SpectrumSource, DEFAULT_EIG_TOL};
use delayrate::{Error, ErrorClass};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "1";
pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "delayrate", version, about = "Delay-dependent convergence rate of x'(t) = A x(t - tau)")]
pub struct Cli {
    /// Relative tolerance of scalar root finding.
    #[arg(long, global = true, default_value_t = DEFAULT_ROOT_TOL)]
    pub tol_root: f64,
    /// Tolerance of the eigenvalue certification.
    #[arg(long, global = true, default_value_t = DEFAULT_EIG_TOL)]
    pub tol_eig: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full delay analysis of a matrix or spectrum document, as JSON.
    Analyze {
        /// Input document, or "-" for stdin.
        input: PathBuf,
        /// Add missing conjugate partners instead of rejecting the spectrum.
        #[arg(long)]
        repair_conjugates: bool,
    },
    /// Rate of convergence on a uniform delay grid, as CSV.
    Sweep {
        input: PathBuf,
        #[arg(long)]
        tau_max: f64,
        #[arg(long, default_value_t = 201)]
        samples: usize,
        #[arg(long)]
        repair_conjugates: bool,
    },
    /// Samples of the stationary curve or a gain level set, as CSV.
    Curves {
        #[arg(long, value_enum)]
        curve: CurveKind,
        /// Level for `--curve cc`.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Integrate x'(t) = A x(t - tau) from a constant preshape; JSON summary
    /// on stdout, trajectory CSV to `--csv`.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Defaults to max(20 / rho0, 10 tau).
        #[arg(long)]
        horizon: Option<f64>,
        /// Steps per delay interval.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Comma-separated constant preshape; defaults to all ones.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        phi: Option<Vec<f64>>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Average consensus over a weighted digraph; JSON report on stdout,
    /// trajectory CSV to `--csv`.
    Consensus {
        digraph: PathBuf,
        /// Comma-separated reference values, one per node.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        refs: Vec<f64>,
        /// Delay, or "auto" for the rate-optimal delay.
        #[arg(long, default_value = "auto")]
        tau: TauChoice,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Lambda,
    C0,
    Cc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauChoice {
    Auto,
    Given(f64),
}

impl std::str::FromStr for TauChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(TauChoice::Auto);
        }
        s.parse::<f64>()
            .map(TauChoice::Given)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

/// Failure of a command, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: String, detail: String },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.class() == ErrorClass::Numerical => 3,
            _ => 2,
        }
    }

    /// `{"error": kind, "detail": ...}` for stderr.
    pub fn to_json(&self) -> String {
        let detail = match self {
            CliError::Core(Error::DelayNotAdmissible { tau, tau_bar }) => {
                serde_json::json!({ "message": self.message(), "tau": tau, "tau_bar": tau_bar })
            }
            _ => serde_json::Value::String(self.message()),
        };
        #[derive(Serialize)]
        struct ErrorDoc<'a> {
            error: &'a str,
            detail: serde_json::Value,
        }
        serde_json::to_string(&ErrorDoc { error: self.kind(), detail }).expect("error document serializes")
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io { path, detail } => format!("{path}: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceInfo {
    pub root: f64,
    pub eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: ToolInfo,
    pub input_sha256: String,
    pub tolerances: ToleranceInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub provenance: Provenance,
    pub spectrum: Vec<ComplexEntry>,
    pub analysis: SystemDelayAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub schema: String,
    pub provenance: Provenance,
    pub tau: f64,
    pub horizon: f64,
    pub steps_per_delay: usize,
    pub samples: usize,
    pub final_state: Vec<f64>,
    /// Rate from the spectrum; absent when the matrix is not Hurwitz.
    pub analytic_rate: Option<f64>,
    pub empirical_rate: Option<f64>,
    pub empirical_note: Option<String>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusOutput {
    pub schema: String,
    pub provenance: Provenance,
    pub tau_choice: String,
    pub final_state: Vec<f64>,
    pub report: ConsensusReport,
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    let io = |e: std::io::Error| CliError::Io { path: path.display().to_string(), detail: e.to_string() };
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_end(&mut bytes).map_err(io)?;
    } else {
        File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io)?;
    }
    Ok(bytes)
}

fn as_text(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| CliError::Core(Error::Parse(format!("{} is not UTF-8", path.display()))))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_tolerance(name: &str, v: f64) -> Result<(), CliError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidArgument(format!("--{name} must be positive and finite, got {v}")).into());
    }
    Ok(())
}

impl Cli {
    fn provenance(&self, input: &[u8]) -> Provenance {
        Provenance {
            tool: ToolInfo { name: TOOL.to_string(), version: VERSION.to_string() },
            input_sha256: sha256_hex(input),
            tolerances: ToleranceInfo { root: self.tol_root, eig: self.tol_eig },
        }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances { root: self.tol_root }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    writeln!(out, "{text}").map_err(|e| CliError::Io { path: "stdout".into(), detail: e.to_string() })
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_string(), detail: e.to_string() }
}

fn write_csv_file(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let name = path.display().to_string();
    let file = File::create(path).map_err(io_err(&name))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(&name))
}

/// Run one command, writing its primary output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    check_tolerance("tol-root", cli.tol_root)?;
    check_tolerance("tol-eig", cli.tol_eig)?;
    match &cli.command {
        Command::Analyze { input, repair_conjugates } => {
            let bytes = read_input(input)?;
            let source = SpectrumSource::parse(&as_text(input, &bytes)?)?;
            let spectrum = source.spectrum(*repair_conjugates, cli.tol_eig)?;
            let analysis = analyze_with(&spectrum, &cli.tolerances())?;
            let report = AnalysisReport {
                schema: SCHEMA.to_string(),
                provenance: cli.provenance(&bytes),
                spectrum: spectrum.eigenvalues().iter().map(|v| ComplexEntry { re: v.re, im: v.im }).collect(),
                analysis,
            };
            write_json(out, &report)
        }
        Command::Sweep { input, tau_max, samples, repair_conjugates } => {
            let bytes = read_input(input)?;
            let source = SpectrumSource::parse(&as_text(input, &bytes)?)?;
            let spectrum = source.spectrum(*repair_conjugates, cli.tol_eig)?;
            let profile = rate_profile(&spectrum, *tau_max, *samples)?;
            let rho0 = spectrum.rho0();
            let mut text = String::from("tau,rho,rho_over_rho0");
            for i in 1..=spectrum.len() {
                text.push_str(&format!(",rho_{i}"));
            }
            text.push('\n');
            for (j, tau) in profile.taus.iter().enumerate() {
                text.push_str(&format!("{},{},{}", fmt17(*tau), fmt17(profile.rho[j]), fmt17(profile.rho[j] / rho0)));
                for mode in &profile.per_mode_rho {
                    text.push(',');
                    text.push_str(&fmt17(mode[j]));
                }
                text.push('\n');
            }
            out.write_all(text.as_bytes()).map_err(io_err("stdout"))
        }
        Command::Curves { curve, c, samples } => {
            let samples = match curve {
                CurveKind::Lambda => lambda_curve(*samples)?,
                CurveKind::C0 => c0_curve(*samples)?,
                CurveKind::Cc => {
                    let c = c.ok_or_else(|| Error::InvalidArgument("--curve cc needs --c".into()))?;
                    level_set(c, *samples)?
                }
            };
            let mut text = String::from("x,y\n");
            for (x, y) in &samples.points {
                text.push_str(&format!("{},{}\n", fmt17(*x), fmt17(*y)));
            }
            out.write_all(text.as_bytes()).map_err(io_err("stdout"))
        }
        Command::Simulate { input, tau, horizon, steps, phi, csv } => {
            let bytes = read_input(input)?;
            let source = SpectrumSource::parse(&as_text(input, &bytes)?)?;
            let m = source
                .matrix()?
                .ok_or_else(|| Error::InvalidArgument("simulate needs a matrix document".into()))?;
            let phi = phi.clone().unwrap_or_else(|| vec![1.0; m.order()]);
            let spectrum = eigenvalues_with_tol(&m, cli.tol_eig).ok();
            let horizon = match (horizon, &spectrum) {
                (Some(h), _) => *h,
                (None, Some(s)) => default_horizon(s.rho0(), *tau),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "--horizon is required when the matrix is not Hurwitz".into(),
                    )
                    .into())
                }
            };
            let trajectory = simulate(&m, *tau, &PreShape::Constant(phi), horizon, *steps)?;
            let analytic_rate = match &spectrum {
                Some(s) => Some(rate_of_convergence(s, *tau)?.0),
                None => None,
            };
            let (empirical_rate, empirical_note) = match estimate_decay_rate(&trajectory, 0.5, None) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(path) = csv {
                write_csv_file(path, |w| trajectory.write_csv(w))?;
            }
            let summary = SimulationSummary {
                schema: SCHEMA.to_string(),
                provenance: cli.provenance(&bytes),
                tau: *tau,
                horizon,
                steps_per_delay: *steps,
                samples: trajectory.times.len(),
                final_state: trajectory.states.last().cloned().unwrap_or_default(),
                analytic_rate,
                empirical_rate,
                empirical_note,
                warning: trajectory.warning.clone(),
            };
            write_json(out, &summary)
        }
        Command::Consensus { digraph, refs, tau, horizon, steps, csv } => {
            let bytes = read_input(digraph)?;
            let g = load_digraph(&as_text(digraph, &bytes)?)?;
            let tau_value = match tau {
                TauChoice::Given(t) => *t,
                TauChoice::Auto => {
                    let setup = reduce_with(&laplacian(&g), cli.tol_eig)?;
                    let spectrum = eigenvalues_with_tol(&setup.reduced, cli.tol_eig)?;
                    analyze_with(&spectrum, &cli.tolerances())?.tau_star
                }
            };
            let opts = ConsensusOptions {
                horizon: *horizon,
                steps_per_delay: *steps,
                eig_tol: cli.tol_eig,
                tolerances: cli.tolerances(),
            };
            let (trajectory, report) = consensus_run_with(&g, refs, tau_value, &opts)?;
            if let Some(path) = csv {
                write_csv_file(path, |w| trajectory.write_csv(w))?;
            }
            let output = ConsensusOutput {
                schema: SCHEMA.to_string(),
                provenance: cli.provenance(&bytes),
                tau_choice: match tau {
                    TauChoice::Auto => "auto".to_string(),
                    TauChoice::Given(_) => "given".to_string(),
                },
                final_state: trajectory.states.last().cloned().unwrap_or_default(),
                report,
            };
            write_json(out, &output)
        }
    }
}
