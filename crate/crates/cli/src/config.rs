//! Run configuration: a TOML file merged with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BIFKIT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "bifkit-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemConfig,
    pub input: InputConfig,
    pub newton: NewtonConfig,
    pub deflation: DeflationConfig,
    pub continuation: ContinuationConfig,
    pub eigs: EigsConfig,
    pub bifurcation: BifurcationConfig,
    pub hb: HbConfig,
    pub floquet: FloquetConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub name: String,
    pub grid_points: Option<usize>,
    pub active: Option<String>,
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub state: Option<PathBuf>,
    pub branch: Option<PathBuf>,
    pub mode: Option<PathBuf>,
    pub bifpoint: Option<PathBuf>,
    pub fourier: Option<PathBuf>,
    /// Steady snapshots of roots to deflate.
    pub deflate: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingChoice {
    None,
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub damping: DampingChoice,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_iterations: 25, damping: DampingChoice::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeflationConfig {
    pub order_p: f64,
    pub shift_a: f64,
}

impl Default for DeflationConfig {
    fn default() -> Self {
        Self { order_p: 2.0, shift_a: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    pub param_min: Option<f64>,
    pub param_max: Option<f64>,
    pub corrector_tol: f64,
    pub corrector_max_iterations: usize,
    pub monitor: bool,
    pub nev: usize,
    pub shift_re: f64,
    pub shift_im: f64,
    pub refine: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            h0: 0.01,
            h_min: 1e-8,
            h_max: 0.1,
            max_points: 100,
            param_min: None,
            param_max: None,
            corrector_tol: 1e-10,
            corrector_max_iterations: 10,
            monitor: true,
            nev: 6,
            shift_re: 0.0,
            shift_im: 0.0,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigsConfig {
    pub nev: usize,
    pub shift_re: f64,
    pub shift_im: f64,
    pub adjoint: bool,
}

impl Default for EigsConfig {
    fn default() -> Self {
        Self { nev: 6, shift_re: 0.0, shift_im: 0.0, adjoint: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcationConfig {
    /// Frequency guess; zero selects a real-eigenvalue bifurcation.
    pub omega: Option<f64>,
    pub tol: f64,
    pub max_iterations: usize,
    pub second_parameter: Option<String>,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    pub second_min: Option<f64>,
    pub second_max: Option<f64>,
    pub bidirectional: bool,
    pub monitor_nev: Option<usize>,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        Self {
            omega: None,
            tol: 1e-10,
            max_iterations: 30,
            second_parameter: None,
            h0: 0.01,
            h_min: 1e-8,
            h_max: 0.1,
            max_points: 100,
            second_min: None,
            second_max: None,
            bidirectional: false,
            monitor_nev: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbConfig {
    pub order: usize,
    /// Target value of the active parameter for `hb-solve`.
    pub alpha: Option<f64>,
    /// Offset from the bifurcation point when `alpha` is unset.
    pub delta: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_points: usize,
    pub param_min: Option<f64>,
    pub param_max: Option<f64>,
}

impl Default for HbConfig {
    fn default() -> Self {
        Self {
            order: 4,
            alpha: None,
            delta: 0.01,
            h0: 0.01,
            h_min: 1e-8,
            h_max: 0.1,
            max_points: 50,
            param_min: None,
            param_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloquetConfig {
    pub nev: usize,
    pub shift_re: f64,
    pub shift_im: f64,
}

impl Default for FloquetConfig {
    fn default() -> Self {
        Self { nev: 6, shift_re: 0.0, shift_im: 0.0 }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `dotted.key` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("malformed override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| usage(format!("{key}: {part} is not a section")))?;
    }
    let leaf = parts[parts.len() - 1];
    let value = match (leaf, literal(raw)) {
        ("deflate", toml::Value::String(s)) => toml::Value::Array(vec![toml::Value::String(s)]),
        (_, v) => v,
    };
    cur.insert(leaf.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.problem.name.is_empty() {
            return Err(usage("problem.name is required"));
        }
        let positive = [
            ("newton.abs_tol", self.newton.abs_tol),
            ("newton.rel_tol", self.newton.rel_tol),
            ("continuation.h_min", self.continuation.h_min),
            ("continuation.h_max", self.continuation.h_max),
            ("continuation.corrector_tol", self.continuation.corrector_tol),
            ("bifurcation.tol", self.bifurcation.tol),
            ("bifurcation.h_min", self.bifurcation.h_min),
            ("bifurcation.h_max", self.bifurcation.h_max),
            ("hb.h_min", self.hb.h_min),
            ("hb.h_max", self.hb.h_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let counts = [
            ("newton.max_iterations", self.newton.max_iterations),
            ("continuation.max_points", self.continuation.max_points),
            ("continuation.corrector_max_iterations", self.continuation.corrector_max_iterations),
            ("continuation.nev", self.continuation.nev),
            ("eigs.nev", self.eigs.nev),
            ("bifurcation.max_iterations", self.bifurcation.max_iterations),
            ("bifurcation.max_points", self.bifurcation.max_points),
            ("hb.order", self.hb.order),
            ("hb.max_points", self.hb.max_points),
            ("floquet.nev", self.floquet.nev),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(usage(format!("{name} must be at least 1")));
            }
        }
        if self.problem.grid_points.is_some_and(|g| g < 3) {
            return Err(usage("problem.grid_points must be at least 3"));
        }
        if !(self.deflation.order_p >= 1.0 && self.deflation.shift_a >= 0.0) {
            return Err(usage("deflation needs order_p >= 1 and shift_a >= 0"));
        }
        if self.bifurcation.omega.is_some_and(|w| !(w >= 0.0)) {
            return Err(usage("bifurcation.omega must be non-negative"));
        }
        Ok(())
    }

    /// Flag value, then the config file, then the environment, then the built-in default.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
