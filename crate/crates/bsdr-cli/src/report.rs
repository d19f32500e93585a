//! Experiment reports: a JSON document plus a flat CSV of per-run rows.
//!
//! Reports are deterministic byte-for-byte: maps are sorted, JSON field
//! order is fixed, and floats print in their shortest round-trip form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One measured run: a seed, a condition label, and named metrics.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub seed: u64,
    pub condition: String,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricRow {
    pub fn new(seed: u64, condition: impl Into<String>) -> MetricRow {
        MetricRow {
            seed,
            condition: condition.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: f64) -> MetricRow {
        self.metrics.insert(key.into(), value);
        self
    }
}

/// A full experiment report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub config_fingerprint: String,
    pub base_seed: u64,
    pub summary: BTreeMap<String, f64>,
    pub rows: Vec<MetricRow>,
    pub details: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(
        experiment: impl Into<String>,
        fingerprint: impl Into<String>,
        base_seed: u64,
    ) -> Report {
        Report {
            experiment: experiment.into(),
            config_fingerprint: fingerprint.into(),
            base_seed,
            summary: BTreeMap::new(),
            rows: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    /// Pretty JSON with sorted maps, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("reports serialize");
        text.push('\n');
        text
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_json().as_bytes())
    }

    /// Flat CSV: `seed,condition` then the union of metric names in
    /// sorted order; metrics absent from a row leave an empty cell.
    pub fn to_csv(&self) -> String {
        let mut columns: BTreeSet<&str> = BTreeSet::new();
        for row in &self.rows {
            columns.extend(row.metrics.keys().map(String::as_str));
        }
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["seed".to_string(), "condition".to_string()];
        header.extend(columns.iter().map(|c| (*c).to_string()));
        writer.write_record(&header).expect("csv header");
        for row in &self.rows {
            let mut record = vec![row.seed.to_string(), row.condition.clone()];
            for column in &columns {
                record.push(match row.metrics.get(*column) {
                    Some(v) => fmt_f64(*v),
                    None => String::new(),
                });
            }
            writer.write_record(&record).expect("csv row");
        }
        String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_csv().as_bytes())
    }
}

/// Shortest decimal form that parses back to exactly the same float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Mean of a slice; NaN for an empty one.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
