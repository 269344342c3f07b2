//! On-disk dataset bundles.
//!
//! A bundle directory holds:
//! * `data.csv` — header `id,dx,b_001,...,b_B`; raw (unstandardized)
//!   measurements printed with 9 significant digits, which round-trips
//!   f32 exactly. Cohorts are z-scored on load with their own statistics.
//! * `truth.json` — versioned ground truth: event times, stages, ordinal
//!   stages, sigmoid signs / family assignments where applicable, the
//!   generating biomarker parameters and the column statistics.
//!
//! Writes go through a temporary directory renamed into place, so partial
//! bundles never appear under the final name.

use super::{BiomarkerParams, Cohort, GroundTruth, Standardization};
use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Serialize, Deserialize)]
struct TruthFile {
    format_version: u32,
    experiment_id: u8,
    seed: u64,
    xi: Vec<f64>,
    k: Vec<f64>,
    y_star: Vec<u32>,
    delta: Option<Vec<i8>>,
    family: Option<Vec<u8>>,
    params: BiomarkerParams,
    standardization: Standardization,
}

/// A bundle read back from disk.
#[derive(Clone, Debug)]
pub struct LoadedBundle {
    pub cohort: Cohort,
    pub truth: GroundTruth,
    pub experiment_id: u8,
    pub seed: u64,
    pub params: BiomarkerParams,
}

/// 9 significant digits: enough to reproduce any finite f32 bit pattern.
pub fn fmt_f32(v: f32) -> String {
    format!("{v:.8e}")
}

fn biomarker_column(b: usize) -> String {
    format!("b_{:03}", b + 1)
}

pub fn write_bundle(
    dir: &Path,
    cohort: &Cohort,
    truth: &GroundTruth,
    experiment_id: u8,
    seed: u64,
    params: &BiomarkerParams,
) -> Result<()> {
    if dir.exists() {
        return Err(Error::config(format!(
            "bundle directory already exists: {}",
            dir.display()
        )));
    }
    let tmp = dir.with_extension("tmp-partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;

    let b = cohort.n_biomarkers;
    let mut csv = String::from("id,dx");
    for col in 0..b {
        csv.push(',');
        csv.push_str(&biomarker_column(col));
    }
    csv.push('\n');
    for row in 0..cohort.cohort_size {
        csv.push_str(&row.to_string());
        csv.push(',');
        csv.push_str(&cohort.diagnosis[row].to_string());
        for col in 0..b {
            csv.push(',');
            csv.push_str(&fmt_f32(cohort.raw[row * b + col]));
        }
        csv.push('\n');
    }
    let data_path = tmp.join(DATA_FILE);
    fs::write(&data_path, csv).map_err(|e| Error::io(data_path.display().to_string(), e))?;

    let truth_file = TruthFile {
        format_version: BUNDLE_FORMAT_VERSION,
        experiment_id,
        seed,
        xi: truth.xi.clone(),
        k: truth.k.clone(),
        y_star: truth.y_star.clone(),
        delta: truth.delta.clone(),
        family: truth.family.clone(),
        params: params.clone(),
        standardization: cohort.standardization.clone(),
    };
    let truth_path = tmp.join(TRUTH_FILE);
    let json = serde_json::to_string_pretty(&truth_file)
        .map_err(|e| Error::Json { path: truth_path.display().to_string(), source: e })?;
    fs::write(&truth_path, json).map_err(|e| Error::io(truth_path.display().to_string(), e))?;

    fs::rename(&tmp, dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<LoadedBundle> {
    let truth_path = dir.join(TRUTH_FILE);
    let truth_text = fs::read_to_string(&truth_path)
        .map_err(|e| Error::io(truth_path.display().to_string(), e))?;
    let tf: TruthFile = serde_json::from_str(&truth_text)
        .map_err(|e| Error::Json { path: truth_path.display().to_string(), source: e })?;
    if tf.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::format(
            truth_path.display().to_string(),
            format!("unsupported format_version {}", tf.format_version),
        ));
    }
    let b = tf.xi.len();

    let data_path = dir.join(DATA_FILE);
    let data_text = fs::read_to_string(&data_path)
        .map_err(|e| Error::io(data_path.display().to_string(), e))?;
    let mut lines = data_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(data_path.display().to_string(), "empty file"))?;
    let mut expect_header = String::from("id,dx");
    for col in 0..b {
        expect_header.push(',');
        expect_header.push_str(&biomarker_column(col));
    }
    if header != expect_header {
        return Err(Error::format(
            data_path.display().to_string(),
            format!("unexpected header `{header}`"),
        ));
    }

    let mut raw = Vec::new();
    let mut diagnosis = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != b + 2 {
            return Err(Error::format(
                data_path.display().to_string(),
                format!("line {}: expected {} fields, got {}", lineno + 2, b + 2, fields.len()),
            ));
        }
        let dx: u8 = fields[1].parse().map_err(|_| {
            Error::format(
                data_path.display().to_string(),
                format!("line {}: bad dx `{}`", lineno + 2, fields[1]),
            )
        })?;
        diagnosis.push(dx);
        for f in &fields[2..] {
            let v: f32 = f.parse().map_err(|_| {
                Error::format(
                    data_path.display().to_string(),
                    format!("line {}: bad float `{f}`", lineno + 2),
                )
            })?;
            raw.push(v);
        }
    }
    let j = diagnosis.len();
    if tf.k.len() != j || tf.y_star.len() != j {
        return Err(Error::format(
            dir.display().to_string(),
            format!(
                "truth.json describes {} participants but data.csv has {j}",
                tf.k.len()
            ),
        ));
    }
    let cohort = Cohort::from_raw(raw, diagnosis, b)?;
    Ok(LoadedBundle {
        cohort,
        truth: GroundTruth {
            xi: tf.xi,
            k: tf.k,
            y_star: tf.y_star,
            delta: tf.delta,
            family: tf.family,
        },
        experiment_id: tf.experiment_id,
        seed: tf.seed,
        params: tf.params,
    })
}
