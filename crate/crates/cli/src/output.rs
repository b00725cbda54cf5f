//! CSV tables, run logs and provenance records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use crate::config::RunConfig;
use crate::snapshot::Snapshot;
use crate::CliError;

/// Shortest round-trip representation in exponent form.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self { header: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> =
            lines.next().ok_or_else(|| CliError::Usage("empty CSV".into()))?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for l in lines {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(CliError::Usage(format!("CSV row has {} fields, header has {}", row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }
}

/// Collects the files written by one command invocation.
pub struct Run {
    dir: PathBuf,
    command: &'static str,
    started: Instant,
    outputs: Vec<String>,
    log: Vec<String>,
}

impl Run {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), command, started: Instant::now(), outputs: vec![], log: vec![] })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        self.write_text(name, &table.render())
    }

    pub fn snapshot(&mut self, name: &str, snap: &Snapshot) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        snap.write(&path)?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn log(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }

    pub fn log_lines(&self) -> &[String] {
        &self.log
    }

    /// Writes a failure report and returns its path.
    pub fn report(&mut self, error: &bifkit::Error) -> Result<PathBuf, CliError> {
        let mut body = json!({ "command": self.command, "error": error.to_string() });
        match error {
            bifkit::Error::Divergence(r) => {
                body["iterations"] = json!(r.iterations);
                body["residual_norm"] = json!(r.residual_norm);
                body["history"] = json!(r.history);
                body["reason"] = json!(r.reason);
            }
            bifkit::Error::CorrectorFailure { trace } => body["history"] = json!(trace),
            _ => {}
        }
        let text = serde_json::to_string_pretty(&body).expect("report serializes");
        self.write_text(&format!("{}.failure.json", self.command), &text)
    }

    /// Writes the log and the provenance record.
    pub fn finish(mut self, cfg: &RunConfig, status: &str) -> Result<(), CliError> {
        let mut log = self.log.join("\n");
        log.push('\n');
        self.write_text(&format!("{}.log", self.command), &log)?;
        let prov = json!({
            "command": self.command,
            "status": status,
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(cfg).expect("config serializes"),
            "outputs": self.outputs,
            "timings": { "total_seconds": self.started.elapsed().as_secs_f64() },
        });
        let text = serde_json::to_string_pretty(&prov).expect("provenance serializes");
        let path = self.path(&format!("{}.provenance.json", self.command));
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
