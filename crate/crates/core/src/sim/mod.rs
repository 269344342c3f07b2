//! Synthetic cohort generation with ground truth.
//!
//! Nine experimental frameworks vary the event-time type (discrete ranks vs
//! near-normal continuous), the stage prior (bell-shaped
//! Dirichlet-multinomial, flat Dirichlet-multinomial, or Beta(5,2)
//! continuous), the measurement model (binary-switch vs sigmoid
//! progression) and the biomarker distribution (normal vs six composite
//! non-normal families).
//!
//! Generation is a pure function of the configuration: every draw comes
//! from named sub-streams of a seeded generator (see [`crate::rng::stream`]),
//! so two runs with the same config are byte-identical and a change in one
//! pathway (say the stage prior) cannot desynchronize another (the event
//! times).

mod bundle;
mod design;
mod events;
mod generate;
mod measure;
mod stages;

pub use bundle::{read_bundle, write_bundle, LoadedBundle, BUNDLE_FORMAT_VERSION};
pub use design::{EventTimeKind, ExperimentDesign, MeasurementModel, StagePrior};
pub use events::{ordinal_stage, sample_event_times};
pub use generate::{default_param_sampler, generate_dataset, resolve_params};
pub use measure::{
    measure_ebm, measure_sigmoid, sample_delta, sample_families, sigmoid_shift, transition_rate,
};
pub use stages::{dm_alpha_profile, sample_stages};

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Per-biomarker pre-event (phi) and post-event (theta) distribution
/// parameters, in the measurement units of each biomarker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerParams {
    pub phi_mu: Vec<f64>,
    pub phi_sigma: Vec<f64>,
    pub theta_mu: Vec<f64>,
    pub theta_sigma: Vec<f64>,
}

impl BiomarkerParams {
    pub fn len(&self) -> usize {
        self.phi_mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_mu.is_empty()
    }

    pub fn validate(&self, n_biomarkers: usize) -> Result<()> {
        let n = self.phi_mu.len();
        if [self.phi_sigma.len(), self.theta_mu.len(), self.theta_sigma.len()]
            .iter()
            .any(|&l| l != n)
            || n != n_biomarkers
        {
            return Err(Error::config(format!(
                "biomarker parameter vectors must all have length {n_biomarkers}"
            )));
        }
        if self
            .phi_sigma
            .iter()
            .chain(&self.theta_sigma)
            .any(|&s| !(s > 0.0))
        {
            return Err(Error::config(
                "biomarker standard deviations must be strictly positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Where biomarker parameters come from: fixed values or a fresh draw per
/// dataset from the default sampler.
#[derive(Clone, Debug)]
pub enum ParamSpec {
    Explicit(BiomarkerParams),
    Sampled,
}

/// Full description of one synthetic dataset.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Experimental framework, 1..=9.
    pub experiment_id: u8,
    pub n_biomarkers: usize,
    pub cohort_size: usize,
    /// Proportion of healthy participants, in (0, 1).
    pub healthy_fraction: f64,
    /// Dataset seed. All sub-streams derive from it.
    pub seed: u64,
    pub params: ParamSpec,
}

impl ExperimentConfig {
    /// Defaults: J = 200, 21% healthy, freshly sampled parameters.
    pub fn new(experiment_id: u8, n_biomarkers: usize, seed: u64) -> Self {
        ExperimentConfig {
            experiment_id,
            n_biomarkers,
            cohort_size: 200,
            healthy_fraction: 0.21,
            seed,
            params: ParamSpec::Sampled,
        }
    }

    pub fn n_healthy(&self) -> usize {
        (self.cohort_size as f64 * self.healthy_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=9).contains(&self.experiment_id) {
            return Err(Error::config(format!(
                "experiment id must be 1..=9, got {}",
                self.experiment_id
            )));
        }
        if self.n_biomarkers < 2 {
            return Err(Error::config(format!(
                "need at least 2 biomarkers, got {}",
                self.n_biomarkers
            )));
        }
        if self.cohort_size < 2 {
            return Err(Error::config(format!(
                "need at least 2 participants, got {}",
                self.cohort_size
            )));
        }
        if !(self.healthy_fraction > 0.0 && self.healthy_fraction < 1.0) {
            return Err(Error::config(format!(
                "healthy fraction must be in (0, 1), got {}",
                self.healthy_fraction
            )));
        }
        let h = self.n_healthy();
        if h == 0 || h >= self.cohort_size {
            return Err(Error::config(format!(
                "cohort of {} with healthy fraction {} leaves no {} participants",
                self.cohort_size,
                self.healthy_fraction,
                if h == 0 { "healthy" } else { "diseased" }
            )));
        }
        if let ParamSpec::Explicit(p) = &self.params {
            p.validate(self.n_biomarkers)?;
        }
        Ok(())
    }
}

/// Latent state behind one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Event time per biomarker: rank in {1..B} for discrete experiments,
    /// pre-noise value in (0, B] for continuous ones.
    pub xi: Vec<f64>,
    /// Stage per participant; 0 for healthy.
    pub k: Vec<f64>,
    /// Ordinal stage per participant: count of events reached at k.
    pub y_star: Vec<u32>,
    /// Sigmoid shift signs, present for sigmoid experiments only.
    pub delta: Option<Vec<i8>>,
    /// Non-normal family index (1..=6) per biomarker, present for
    /// non-normal experiments only.
    pub family: Option<Vec<u8>>,
}

/// Column statistics used for z-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Threshold under which a column is considered constant and z-scores to 0.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Measurement matrix plus diagnosis labels. `x` holds the z-scored values
/// the models consume; `raw` keeps the original measurements for on-disk
/// bundles.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub raw: Vec<f32>,
    pub x: Vec<f32>,
    /// 0 healthy, 1 diseased.
    pub diagnosis: Vec<u8>,
    pub standardization: Standardization,
    pub n_biomarkers: usize,
    pub cohort_size: usize,
}

impl Cohort {
    /// Builds a cohort from raw measurements (row-major J x B), computing
    /// this cohort's own column statistics and z-scoring with them.
    /// Degenerate columns (std < 1e-12) map to all zeros.
    pub fn from_raw(raw: Vec<f32>, diagnosis: Vec<u8>, n_biomarkers: usize) -> Result<Self> {
        let j = diagnosis.len();
        if n_biomarkers == 0 || j == 0 || raw.len() != j * n_biomarkers {
            return Err(Error::config(format!(
                "raw matrix has {} values, expected {} x {}",
                raw.len(),
                j,
                n_biomarkers
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("cohort measurements"));
        }
        let mut mean = vec![0.0f64; n_biomarkers];
        let mut std = vec![0.0f64; n_biomarkers];
        for b in 0..n_biomarkers {
            let mut acc = 0.0f64;
            for row in 0..j {
                acc += raw[row * n_biomarkers + b] as f64;
            }
            let m = acc / j as f64;
            let mut var = 0.0f64;
            for row in 0..j {
                let d = raw[row * n_biomarkers + b] as f64 - m;
                var += d * d;
            }
            mean[b] = m;
            std[b] = (var / j as f64).sqrt();
        }
        let mut x = vec![0.0f32; raw.len()];
        for row in 0..j {
            for b in 0..n_biomarkers {
                let idx = row * n_biomarkers + b;
                x[idx] = if std[b] < DEGENERATE_STD {
                    0.0
                } else {
                    ((raw[idx] as f64 - mean[b]) / std[b]) as f32
                };
            }
        }
        Ok(Cohort {
            raw,
            x,
            diagnosis,
            standardization: Standardization { mean, std },
            n_biomarkers,
            cohort_size: j,
        })
    }

    pub fn n_diseased(&self) -> usize {
        self.diagnosis.iter().filter(|&&d| d == 1).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_catches_bad_inputs() {
        let mut cfg = ExperimentConfig::new(3, 12, 1);
        assert!(cfg.validate().is_ok());
        cfg.experiment_id = 10;
        assert!(cfg.validate().is_err());
        cfg.experiment_id = 3;
        cfg.n_biomarkers = 1;
        assert!(cfg.validate().is_err());
        cfg.n_biomarkers = 12;
        cfg.cohort_size = 1;
        assert!(cfg.validate().is_err());
        cfg.cohort_size = 200;
        cfg.healthy_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.healthy_fraction = 0.001; // rounds to zero healthy participants
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zscore_columns_are_standardized() {
        let raw: Vec<f32> = (0..40).map(|i| (i as f32 * 0.37).sin() * 5.0 + 2.0).collect();
        let cohort = Cohort::from_raw(raw, vec![0; 10], 4).unwrap();
        for b in 0..4 {
            let col: Vec<f64> = (0..10).map(|r| cohort.x[r * 4 + b] as f64).collect();
            let mean: f64 = col.iter().sum::<f64>() / 10.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-6, "col {b} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "col {b} std {}", var.sqrt());
        }
    }

    #[test]
    fn degenerate_column_maps_to_zeros() {
        let raw = vec![3.5f32, 1.0, 3.5, 2.0, 3.5, 3.0];
        let cohort = Cohort::from_raw(raw, vec![0, 1, 1], 2).unwrap();
        for r in 0..3 {
            assert_eq!(cohort.x[r * 2], 0.0);
        }
        assert!(cohort.x[1].abs() > 0.5);
    }

    #[test]
    fn degenerate_sigma_rejected_by_validate() {
        let p = BiomarkerParams {
            phi_mu: vec![0.0, 0.0],
            phi_sigma: vec![1.0, 0.0],
            theta_mu: vec![1.0, 1.0],
            theta_sigma: vec![1.0, 1.0],
        };
        assert!(p.validate(2).is_err());
    }
}
