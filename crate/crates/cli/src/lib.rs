//! Command-line driver for bifkit: configuration, persistence and the
//! workflow commands.

pub mod commands;
pub mod config;
pub mod output;
pub mod snapshot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Exit status for malformed configuration or arguments.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for solver divergence.
pub const EXIT_DIVERGENCE: i32 = 3;
/// Exit status for an incompatible or corrupt snapshot.
pub const EXIT_SNAPSHOT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("solver failure: {message} (report: {})", report.display())]
    Divergence { message: String, report: PathBuf },
    #[error("incompatible snapshot: {0}")]
    Snapshot(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] bifkit::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Divergence { .. } => EXIT_DIVERGENCE,
            CliError::Snapshot(_) => EXIT_SNAPSHOT,
            CliError::Io { .. } => 1,
            CliError::Core(e) if is_usage(e) => EXIT_USAGE,
            CliError::Core(_) => EXIT_DIVERGENCE,
        }
    }
}

/// Core errors caused by the request rather than by the numerics.
pub(crate) fn is_usage(e: &bifkit::Error) -> bool {
    use bifkit::Error as E;
    matches!(e, E::InvalidConfiguration(_) | E::Unsupported(_) | E::DimensionMismatch { .. })
}

#[derive(Debug, Parser)]
#[command(name = "bifkit", version, about = "Continuation, bifurcation and periodic-orbit analysis")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config file and BIFKIT_OUTPUT_DIR).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Override any config key, e.g. `--set continuation.h0=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
    /// Built-in problem name.
    #[arg(long, global = true)]
    pub problem: Option<String>,
    /// Parameter value, e.g. `--param L=0.5`.
    #[arg(long = "param", value_name = "NAME=VALUE", global = true)]
    pub params: Vec<String>,
    /// Continuation parameter.
    #[arg(long, global = true)]
    pub active: Option<String>,
    /// Steady snapshot to start from.
    #[arg(long, global = true)]
    pub state: Option<PathBuf>,
    /// Branch CSV to resume (with `--state` holding its final point).
    #[arg(long, global = true)]
    pub branch: Option<PathBuf>,
    /// Mode snapshot whose eigenvalue seeds bifurcation location.
    #[arg(long, global = true)]
    pub mode: Option<PathBuf>,
    /// Bifurcation point snapshot.
    #[arg(long, global = true)]
    pub bifpoint: Option<PathBuf>,
    /// Fourier (periodic orbit) snapshot.
    #[arg(long, global = true)]
    pub fourier: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Newton (optionally deflated) solve for a steady state.
    Steady,
    /// Pseudo-arclength continuation of a steady branch.
    Trace,
    /// Eigenvalues of the linearization at a steady state.
    Eigs,
    /// Locate a fold, pitchfork or Hopf point.
    BifLocate,
    /// Trace a bifurcation point in two parameters.
    BifTrace,
    /// Harmonic-balance solve for a periodic orbit.
    HbSolve,
    /// Continue a periodic orbit in the active parameter.
    HbTrace,
    /// Floquet exponents of a periodic orbit.
    Floquet,
    /// Compare derivative callbacks with finite differences.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Trace => "trace",
            Command::Eigs => "eigs",
            Command::BifLocate => "bif-locate",
            Command::BifTrace => "bif-trace",
            Command::HbSolve => "hb-solve",
            Command::HbTrace => "hb-trace",
            Command::Floquet => "floquet",
            Command::Check => "check",
        }
    }
}

fn split_pair(s: &str) -> Result<(&str, &str), CliError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got {s:?}")))
}

fn path_value(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

impl Cli {
    /// Config overrides in precedence order (later wins).
    pub fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.sets {
            let (k, v) = split_pair(s)?;
            out.push((k.to_string(), v.to_string()));
        }
        if let Some(p) = &self.problem {
            out.push(("problem.name".into(), toml::Value::String(p.clone()).to_string()));
        }
        for s in &self.params {
            let (k, v) = split_pair(s)?;
            v.parse::<f64>().map_err(|_| CliError::Usage(format!("parameter {k} needs a number, got {v:?}")))?;
            out.push((format!("problem.parameters.{k}"), v.to_string()));
        }
        if let Some(a) = &self.active {
            out.push(("problem.active".into(), toml::Value::String(a.clone()).to_string()));
        }
        let inputs = [
            ("state", &self.state),
            ("branch", &self.branch),
            ("mode", &self.mode),
            ("bifpoint", &self.bifpoint),
            ("fourier", &self.fourier),
        ];
        for (key, p) in inputs {
            if let Some(p) = p {
                out.push((format!("input.{key}"), path_value(p)));
            }
        }
        Ok(out)
    }
}

/// Runs a parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = cli.overrides().and_then(|ov| RunConfig::load(cli.config.as_deref(), &ov)).and_then(|cfg| {
        let out = cfg.resolve_output_dir(cli.output.as_deref());
        commands::execute(cli.command, &cfg, &out)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("bifkit {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
