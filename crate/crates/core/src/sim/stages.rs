//! Disease-stage sampling for diseased participants.

use super::design::{ExperimentDesign, StagePrior};
use super::ExperimentConfig;
use crate::dist;
use crate::rng::Xoshiro256pp;
use crate::Result;

const ALPHA_MIN: f64 = 0.35;
const ALPHA_MAX: f64 = 4.25;

/// Bell-shaped Dirichlet concentration profile over stage positions
/// 0..B-1 (position p corresponds to stage p+1):
/// `alpha_p = a_min + (a_max - a_min) * exp(-(p - c)^2 / (2 w^2))`
/// with range [0.35, 4.25], center c = (B-1)/2 and width w = B/6.
pub fn dm_alpha_profile(n_biomarkers: usize) -> Vec<f64> {
    let b = n_biomarkers as f64;
    let center = (b - 1.0) / 2.0;
    let width = b / 6.0;
    (0..n_biomarkers)
        .map(|p| {
            let z = (p as f64 - center) / width;
            ALPHA_MIN + (ALPHA_MAX - ALPHA_MIN) * (-0.5 * z * z).exp()
        })
        .collect()
}

/// Draws `n_diseased` stages under the experiment's prior. Healthy
/// participants always have stage 0 and are not drawn here.
///
/// Ordinal priors draw stage probabilities once per dataset
/// (`pi ~ Dirichlet(alpha)`) and then stages `k ~ Categorical(pi)` over
/// {1..B}. The continuous prior draws `k ~ Beta(5,2) * B` per participant,
/// redrawing exact zeros so k stays in (0, B].
pub fn sample_stages(
    cfg: &ExperimentConfig,
    rng: &mut Xoshiro256pp,
    n_diseased: usize,
) -> Result<Vec<f64>> {
    let design = ExperimentDesign::for_experiment(cfg.experiment_id)?;
    let b = cfg.n_biomarkers;
    Ok(match design.stage_prior {
        StagePrior::DirichletGaussianProfile => {
            let pi = dist::dirichlet(rng, &dm_alpha_profile(b));
            (0..n_diseased)
                .map(|_| (dist::categorical(rng, &pi) + 1) as f64)
                .collect()
        }
        StagePrior::DirichletUniform => {
            let pi = dist::dirichlet(rng, &vec![100.0; b]);
            (0..n_diseased)
                .map(|_| (dist::categorical(rng, &pi) + 1) as f64)
                .collect()
        }
        StagePrior::ContinuousBeta => (0..n_diseased)
            .map(|_| loop {
                let v = dist::beta(rng, 5.0, 2.0) * b as f64;
                if v > 0.0 {
                    break v;
                }
            })
            .collect(),
    })
}
