//! CSV formatting, hashing and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn row(values: &[f64]) -> String {
    values.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// One pass/fail threshold of a check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    /// `"<="`, `">="`, `"<"` or `">"`.
    pub relation: &'static str,
}

impl Metric {
    pub fn at_most(label: &str, value: f64, bound: f64) -> Self {
        Self::new(label, value, bound, "<=")
    }

    pub fn at_least(label: &str, value: f64, bound: f64) -> Self {
        Self::new(label, value, bound, ">=")
    }

    pub fn below(label: &str, value: f64, bound: f64) -> Self {
        Self::new(label, value, bound, "<")
    }

    pub fn above(label: &str, value: f64, bound: f64) -> Self {
        Self::new(label, value, bound, ">")
    }

    fn new(label: &str, value: f64, bound: f64, relation: &'static str) -> Self {
        Self {
            label: label.to_string(),
            value,
            bound,
            relation,
        }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            "<=" => self.value <= self.bound,
            ">=" => self.value >= self.bound,
            "<" => self.value < self.bound,
            _ => self.value > self.bound,
        }
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub metrics: Vec<Metric>,
    /// Free-form observations that are reported but not asserted.
    pub notes: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        !self.metrics.is_empty() && self.metrics.iter().all(Metric::passed)
    }

    /// One human-readable line.
    pub fn line(&self) -> String {
        let parts: Vec<String> = self
            .metrics
            .iter()
            .map(|m| {
                let flag = if m.passed() { "" } else { " FAILED" };
                format!("{} = {:.3e} {} {:e}{flag}", m.label, m.value, m.relation, m.bound)
            })
            .collect();
        format!(
            "criterion {:>2} {} {}: {}",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            parts.join("; ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a command read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<InputHash>,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub checks: Vec<Check>,
}

/// Output directory that records every file written to it.
pub struct OutputDir {
    dir: PathBuf,
    config_hash: String,
    artifacts: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config_hash.to_string(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    /// CSV whose first line carries the config hash, then `meta` comment
    /// lines, then the column header and body.
    pub fn write_csv(&mut self, name: &str, meta: &[String], header: &str, body: &str) -> Result<PathBuf, CliError> {
        let mut text = format!("# config_hash={}\n", self.config_hash);
        for m in meta {
            text.push_str("# ");
            text.push_str(m);
            text.push('\n');
        }
        text.push_str(header);
        text.push('\n');
        text.push_str(body);
        self.write(name, &text)
    }

    pub fn finish(
        mut self,
        command: &str,
        inputs: Vec<InputHash>,
        started: std::time::Instant,
        checks: Vec<Check>,
    ) -> Result<RunManifest, CliError> {
        let manifest_path = self.dir.join("manifest.json");
        self.artifacts.push(manifest_path.clone());
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: self.config_hash.clone(),
            inputs,
            artifacts: self.artifacts.clone(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            checks,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, text).map_err(|source| CliError::Io {
            path: manifest_path,
            source,
        })?;
        Ok(manifest)
    }
}
