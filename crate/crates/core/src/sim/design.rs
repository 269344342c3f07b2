//! Routing table: experiment id -> generative pathway.

use crate::error::Error;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventTimeKind {
    /// Event time equals the biomarker's rank in a uniformly random
    /// ordering: a permutation of {1..B}.
    DiscreteRank,
    /// Beta(2,2)-shaped times over [0, B]; per-participant noise is added
    /// at measurement time.
    ContinuousBeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StagePrior {
    /// Dirichlet with a bell-shaped concentration profile over stages.
    DirichletGaussianProfile,
    /// Dirichlet(100, ..., 100): near-uniform stage frequencies.
    DirichletUniform,
    /// Beta(5,2) * B, clipped to (0, B]: skewed toward later stages.
    ContinuousBeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementModel {
    /// Binary switch between pre- and post-event normals.
    EbmNormal,
    /// Binary switch with per-biomarker composite non-normal families.
    EbmNonNormal,
    /// Pre-event baseline for everyone; diseased get a logistic shift.
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExperimentDesign {
    pub event_times: EventTimeKind,
    pub stage_prior: StagePrior,
    pub measurement: MeasurementModel,
}

/// Standard deviation of the per-(participant, biomarker) event-time noise
/// as a fraction of B; applies to continuous-event-time experiments only.
pub const EVENT_TIME_NOISE_FRACTION: f64 = 0.05;

impl ExperimentDesign {
    pub fn for_experiment(id: u8) -> Result<Self> {
        use EventTimeKind::{ContinuousBeta as ContinuousTimes, DiscreteRank};
        use MeasurementModel::*;
        use StagePrior::{ContinuousBeta as ContinuousStages, DirichletGaussianProfile, DirichletUniform};
        let (event_times, stage_prior, measurement) = match id {
            1 => (DiscreteRank, DirichletGaussianProfile, EbmNormal),
            2 => (DiscreteRank, DirichletGaussianProfile, EbmNonNormal),
            3 => (DiscreteRank, DirichletUniform, EbmNormal),
            4 => (DiscreteRank, DirichletUniform, EbmNonNormal),
            5 => (DiscreteRank, ContinuousStages, Sigmoid),
            6 => (DiscreteRank, ContinuousStages, EbmNormal),
            7 => (DiscreteRank, ContinuousStages, EbmNonNormal),
            8 => (ContinuousTimes, ContinuousStages, Sigmoid),
            9 => (ContinuousTimes, ContinuousStages, EbmNormal),
            _ => {
                return Err(Error::config(format!("experiment id must be 1..=9, got {id}")));
            }
        };
        Ok(ExperimentDesign {
            event_times,
            stage_prior,
            measurement,
        })
    }

    /// Event-time jitter SD used at measurement routing; 0 for discrete
    /// experiments.
    pub fn event_noise_sd(&self, n_biomarkers: usize) -> f64 {
        match self.event_times {
            EventTimeKind::DiscreteRank => 0.0,
            EventTimeKind::ContinuousBeta => EVENT_TIME_NOISE_FRACTION * n_biomarkers as f64,
        }
    }

    /// Sequencing targets are continuous event times rather than ranks.
    pub fn continuous_targets(&self) -> bool {
        self.event_times == EventTimeKind::ContinuousBeta
    }
}
