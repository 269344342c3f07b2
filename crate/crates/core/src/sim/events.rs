//! Event-time sampling and the ordinal stage conversion.

use super::design::{EventTimeKind, ExperimentDesign};
use super::ExperimentConfig;
use crate::dist;
use crate::rng::Xoshiro256pp;
use crate::Result;

/// Draws event times for one dataset.
///
/// Discrete experiments: a uniformly random permutation of {1..B} (the
/// event time of a biomarker equals its rank in the ordering). Continuous
/// experiments: `xi_b ~ Beta(2,2) * B`, i.e. roughly symmetric over [0, B];
/// exact zeros are redrawn so healthy participants (k = 0) can never have
/// reached an event. The per-participant noise on continuous event times
/// is applied later, at measurement routing (see `measure`).
pub fn sample_event_times(cfg: &ExperimentConfig, rng: &mut Xoshiro256pp) -> Result<Vec<f64>> {
    let design = ExperimentDesign::for_experiment(cfg.experiment_id)?;
    let b = cfg.n_biomarkers;
    Ok(match design.event_times {
        EventTimeKind::DiscreteRank => {
            let mut ranks: Vec<f64> = (1..=b).map(|r| r as f64).collect();
            rng.shuffle(&mut ranks);
            ranks
        }
        EventTimeKind::ContinuousBeta => (0..b)
            .map(|_| loop {
                let v = dist::beta(rng, 2.0, 2.0) * b as f64;
                if v > 0.0 {
                    break v;
                }
            })
            .collect(),
    })
}

/// Ordinal stage: the count of biomarkers whose event time has been
/// reached at stage `k` (ties count as reached).
pub fn ordinal_stage(xi: &[f64], k: f64) -> u32 {
    xi.iter().filter(|&&t| t <= k).count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_seed, stream, Xoshiro256pp};

    #[test]
    fn discrete_times_are_a_permutation() {
        let cfg = ExperimentConfig::new(1, 12, 9);
        let mut rng = Xoshiro256pp::stream(cfg.seed, stream::EVENT_TIMES);
        let xi = sample_event_times(&cfg, &mut rng).unwrap();
        let mut sorted = xi.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (1..=12).map(|r| r as f64).collect();
        assert_eq!(sorted, expect);
    }

    #[test]
    fn continuous_times_match_beta_moments() {
        // Beta(2,2) has mean 1/2 and variance 1/20, so xi = Beta(2,2) * B
        // has mean B/2 and variance B^2/20.
        let b = 12usize;
        let mut all = Vec::with_capacity(12_000);
        for i in 0..1000u64 {
            let cfg = ExperimentConfig::new(8, b, derive_seed(77, i));
            let mut rng = Xoshiro256pp::stream(cfg.seed, stream::EVENT_TIMES);
            all.extend(sample_event_times(&cfg, &mut rng).unwrap());
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        assert!((mean - 6.0).abs() < 0.15, "mean {mean}");
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = (b * b) as f64 / 20.0;
        assert!(
            (var - expect).abs() < 0.1 * expect,
            "var {var} vs {expect}"
        );
        assert!(all.iter().all(|&x| x > 0.0 && x <= b as f64));
    }

    #[test]
    fn ordinal_stage_counts_reached_events() {
        let xi: Vec<f64> = (1..=12).map(|r| r as f64).collect();
        assert_eq!(ordinal_stage(&xi, 3.5), 3);
        assert_eq!(ordinal_stage(&xi, 0.0), 0);
        // Equality counts as reached.
        assert_eq!(ordinal_stage(&[2.3, 7.1, 4.4], 4.4), 2);
    }

    #[test]
    fn ordinal_stage_monotone_in_k() {
        let mut rng = Xoshiro256pp::from_seed(5);
        for _ in 0..200 {
            let xi: Vec<f64> = (0..10).map(|_| rng.next_f64() * 10.0).collect();
            let k1 = rng.next_f64() * 12.0 - 1.0;
            let k2 = k1 + rng.next_f64() * 3.0;
            assert!(ordinal_stage(&xi, k1) <= ordinal_stage(&xi, k2));
        }
    }
}
