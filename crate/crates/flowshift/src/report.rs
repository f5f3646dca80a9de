//! Verification reports: residual statistics plus machine-readable output.
//!
//! JSON files carry the summary; CSV files carry every per-point residual in
//! a fixed order, so two runs of the same config produce byte-identical
//! tables.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One residual sample: a human-readable input label and its residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub label: String,
    pub residual: f64,
}

/// Outcome of one verification suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite_name: String,
    /// The identity this suite checks, written as a formula.
    pub verifies: String,
    pub pass: bool,
    pub tolerance: f64,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub p95_residual: f64,
    pub n_points: usize,
    pub worst_cases: Vec<ResidualRecord>,
    /// Seconds; informational only, never part of the CSV table.
    pub wall_time: f64,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Suite-specific payload (factor samples, normalized field parameters).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
    #[serde(skip)]
    pub rows: Vec<ResidualRecord>,
}

impl VerificationReport {
    /// Build a report from per-point residual rows. `pass` is
    /// `max_residual <= tolerance`; rows with non-finite residuals fail.
    pub fn from_rows(
        suite_name: impl Into<String>,
        verifies: impl Into<String>,
        tolerance: f64,
        rows: Vec<ResidualRecord>,
        wall_time: f64,
    ) -> Self {
        let n_points = rows.len();
        let finite = rows.iter().all(|r| r.residual.is_finite());
        let max_residual = rows.iter().map(|r| r.residual).fold(0.0_f64, f64::max);
        let mean_residual = if n_points == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.residual).sum::<f64>() / n_points as f64
        };
        let p95_residual = percentile(&rows, 0.95);
        let mut worst: Vec<ResidualRecord> = rows.clone();
        worst.sort_by(|a, b| b.residual.total_cmp(&a.residual));
        worst.truncate(5);
        VerificationReport {
            suite_name: suite_name.into(),
            verifies: verifies.into(),
            pass: finite && max_residual <= tolerance,
            tolerance,
            max_residual,
            mean_residual,
            p95_residual,
            n_points,
            worst_cases: worst,
            wall_time,
            notes: Vec::new(),
            extra: serde_json::Value::Null,
            rows,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Force-fail the report with an explanatory note.
    pub fn failed(mut self, note: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(note.into());
        self
    }

    pub fn one_line(&self) -> String {
        format!(
            "{} {} max={:.3e} tol={:.1e} n={} ({:.2}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.suite_name,
            self.max_residual,
            self.tolerance,
            self.n_points,
            self.wall_time
        )
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| crate::error::Error::Config(format!("serializing report: {e}")))?;
        Ok(())
    }

    /// Per-point residual table, one row per sample, in evaluation order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "label,residual")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.label, r.residual)?;
        }
        Ok(())
    }
}

fn percentile(rows: &[ResidualRecord], q: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut v: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() as f64 - 1.0) * q).round() as usize;
    v[idx]
}
