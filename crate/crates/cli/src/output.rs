//! CSV tables and JSON sidecars. Every file carries the configuration hash
//! and the code version.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use spinrelax_core::redfield::RelaxationFlags;
use spinrelax_core::sweep::{SweepResult, CODE_VERSION};

use crate::error::{CliError, CliResult};

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config_hash: String,
    pub code_version: String,
    pub command: String,
}

impl RunInfo {
    pub fn new(config_hash: impl Into<String>, command: impl Into<String>) -> Self {
        Self { config_hash: config_hash.into(), code_version: CODE_VERSION.to_string(), command: command.into() }
    }
}

/// Nine significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, info: &RunInfo) -> String {
        let mut s = self.header.join(",");
        s.push_str(",config_hash,code_version\n");
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| quote(c)).collect();
            s.push_str(&cells.join(","));
            s.push_str(&format!(",{},{}\n", info.config_hash, info.code_version));
        }
        s
    }
}

pub fn flag_names(f: &RelaxationFlags) -> String {
    let mut names = Vec::new();
    for (on, name) in [
        (f.mismatch, "mismatch"),
        (f.non_exponential, "non_exponential"),
        (f.fit_skipped, "fit_skipped"),
        (f.non_unique_stationary, "non_unique_stationary"),
        (f.no_decay, "no_decay"),
    ] {
        if on {
            names.push(name);
        }
    }
    names.join(";")
}

pub fn sweep_table(result: &SweepResult) -> Table {
    let axis = result.metadata.axis.name();
    let mut t = Table::new(&[
        &axis,
        "tau_total_ms",
        "tau_zeeman_ms",
        "tau_hyperfine_ms",
        "tau_dipolar_ms",
        "tau_ratio",
        "tau_fit_ms",
        "fit_rms",
        "rate_eigenvalue_per_ps",
        "overlap",
        "trace_drift",
        "hermiticity_drift",
        "min_rho_eigenvalue",
        "skipped_modes",
        "imaginary_modes",
        "flags",
        "error",
    ]);
    for r in &result.rows {
        let d = &r.diagnostics;
        t.push(vec![
            num(r.value),
            opt(r.tau_total_ms),
            opt(r.tau_channel_ms[0]),
            opt(r.tau_channel_ms[1]),
            opt(r.tau_channel_ms[2]),
            opt(r.tau_ratio),
            opt(d.tau_fit_ms),
            opt(d.fit_rms),
            opt(d.rate_eigenvalue),
            opt(d.overlap),
            opt(d.trace_drift),
            opt(d.hermiticity_drift),
            opt(d.min_rho_eigenvalue),
            d.skipped_modes.to_string(),
            d.imaginary_modes.to_string(),
            flag_names(&d.flags),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    t
}

/// JSON sidecar: the stamped run information, the effective settings and
/// the full-precision payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar<S, T> {
    #[serde(flatten)]
    pub info: RunInfo,
    pub settings: S,
    pub data: T,
}

fn write(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_table(dir: &Path, stem: &str, table: &Table, info: &RunInfo) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(format!("{stem}.csv"));
    write(&path, &table.to_csv(info))?;
    Ok(path)
}

pub fn write_sidecar<S: Serialize, T: Serialize>(
    dir: &Path,
    stem: &str,
    info: &RunInfo,
    settings: &S,
    data: &T,
) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(format!("{stem}.json"));
    let doc = Sidecar { info: info.clone(), settings, data };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Validation(e.to_string()))?;
    write(&path, &text)?;
    Ok(path)
}

pub fn read_sidecar<S: DeserializeOwned, T: DeserializeOwned>(path: &Path) -> CliResult<Sidecar<S, T>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.to_path_buf(), msg: e.to_string() })
}

/// CSV plus JSON sidecar of a sweep.
pub fn write_results<S: Serialize>(
    dir: &Path,
    stem: &str,
    result: &SweepResult,
    info: &RunInfo,
    settings: &S,
) -> CliResult<(PathBuf, PathBuf)> {
    let csv = write_table(dir, stem, &sweep_table(result), info)?;
    let json = write_sidecar(dir, stem, info, settings, result)?;
    Ok((csv, json))
}
