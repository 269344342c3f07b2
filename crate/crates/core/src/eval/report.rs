//! Report files: per-dataset CSV with an aggregate row, a JSON summary,
//! and trained-by-tested matrix CSVs.

use super::{CrossMatrix, EvalReport, Stats};
use crate::error::Error;
use crate::Result;
use serde::Serialize;
use std::fs;
use std::path::Path;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_else(|| "NA".to_string())
}

/// Per-dataset rows followed by one aggregate row carrying mean, std and
/// 95% CI half-width for each metric.
pub fn write_eval_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from(
        "dataset,tau,staging_mae,sequence_mae,\
         tau_std,staging_mae_std,sequence_mae_std,\
         tau_ci95,staging_mae_ci95,sequence_mae_ci95\n",
    );
    for row in &report.rows {
        match &row.metrics {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},,,,,,\n",
                row.dataset,
                fmt(m.tau),
                fmt(m.staging_mae),
                fmt(m.sequence_mae)
            )),
            None => out.push_str(&format!("{},NA,NA,NA,,,,,,\n", row.dataset)),
        }
    }
    out.push_str(&format!(
        "aggregate,{},{},{},{},{},{},{},{},{}\n",
        fmt(report.tau.mean),
        fmt(report.staging.mean),
        fmt(report.sequence.mean),
        fmt(report.tau.std),
        fmt(report.staging.std),
        fmt(report.sequence.std),
        fmt(report.tau.ci95),
        fmt(report.staging.ci95),
        fmt(report.sequence.ci95)
    ));
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[derive(Serialize)]
struct StatsJson {
    mean: f64,
    std: f64,
    ci95_halfwidth: f64,
    n: usize,
}

impl From<&Stats> for StatsJson {
    fn from(s: &Stats) -> Self {
        StatsJson {
            mean: s.mean,
            std: s.std,
            ci95_halfwidth: s.ci95,
            n: s.n,
        }
    }
}

#[derive(Serialize)]
struct SummaryJson {
    format_version: u32,
    n_datasets: usize,
    n_failed: usize,
    tau: StatsJson,
    staging_mae: StatsJson,
    sequence_mae: StatsJson,
}

/// Aggregate summary mirroring the per-experiment result tables.
pub fn write_summary_json(path: &Path, report: &EvalReport) -> Result<()> {
    let summary = SummaryJson {
        format_version: 1,
        n_datasets: report.rows.len(),
        n_failed: report.n_failed(),
        tau: (&report.tau).into(),
        staging_mae: (&report.staging).into(),
        sequence_mae: (&report.sequence).into(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Json { path: path.display().to_string(), source: e })?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Trained-rows by tested-columns grid: each row ends with its RowMean and
/// a final ColMean row closes with the grand mean.
pub fn write_cross_matrix_csv(path: &Path, matrix: &CrossMatrix) -> Result<()> {
    let mut out = String::from("trained\\tested");
    for label in &matrix.col_labels {
        out.push(',');
        out.push_str(label);
    }
    out.push_str(",row_mean\n");
    for (i, row_label) in matrix.row_labels.iter().enumerate() {
        out.push_str(row_label);
        for cell in &matrix.entries[i] {
            out.push(',');
            out.push_str(&fmt_cell(*cell));
        }
        out.push(',');
        out.push_str(&fmt_cell(matrix.row_means[i]));
        out.push('\n');
    }
    out.push_str("col_mean");
    for cm in &matrix.col_means {
        out.push(',');
        out.push_str(&fmt_cell(*cm));
    }
    out.push(',');
    out.push_str(&fmt_cell(matrix.grand_mean));
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
