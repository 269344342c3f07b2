//! Measurement models: binary-switch (with normal or composite non-normal
//! biomarker distributions) and sigmoid progression.

use super::BiomarkerParams;
use crate::dist;
use crate::rng::Xoshiro256pp;

/// Draws the per-biomarker family assignment for non-normal experiments:
/// one uniform draw from {1..6} per biomarker, once per dataset.
pub fn sample_families(n_biomarkers: usize, rng: &mut Xoshiro256pp) -> Vec<u8> {
    (0..n_biomarkers).map(|_| rng.next_below(6) as u8 + 1).collect()
}

/// Draws the sigmoid shift signs: `delta_b = (-1)^Z_b`, `Z_b ~
/// Bernoulli(0.5)`, once per dataset.
pub fn sample_delta(n_biomarkers: usize, rng: &mut Xoshiro256pp) -> Vec<i8> {
    (0..n_biomarkers)
        .map(|_| if dist::bernoulli(rng, 0.5) { -1 } else { 1 })
        .collect()
}

/// Binary-switch measurements: each cell is drawn wholly from the
/// post-event component when `k_j >= xi_b` (plus optional per-cell
/// event-time jitter for continuous experiments) and from the pre-event
/// component otherwise. `family` selects composite non-normal components
/// per biomarker; `None` means plain normals.
///
/// Returns the J x B matrix row-major (participant-major).
pub fn measure_ebm(
    xi: &[f64],
    k: &[f64],
    params: &BiomarkerParams,
    family: Option<&[u8]>,
    event_noise_sd: f64,
    rng: &mut Xoshiro256pp,
) -> Vec<f64> {
    let b_count = xi.len();
    let mut x = Vec::with_capacity(k.len() * b_count);
    for &kj in k {
        for b in 0..b_count {
            let xi_eff = if event_noise_sd > 0.0 {
                xi[b] + dist::normal(rng, 0.0, event_noise_sd)
            } else {
                xi[b]
            };
            let post = kj >= xi_eff;
            let (mu, sigma) = if post {
                (params.theta_mu[b], params.theta_sigma[b])
            } else {
                (params.phi_mu[b], params.phi_sigma[b])
            };
            let v = match family {
                None => dist::normal(rng, mu, sigma),
                Some(f) => sample_composite(rng, f[b], mu, sigma),
            };
            x.push(v);
        }
    }
    x
}

/// One draw from composite family `family` (1..=6) located at the active
/// component's (mu, sigma), followed by additive N(0, (0.2 sigma)^2) noise
/// and clipping to mu +/- 5 sigma (family 5: mu +/- 4 sigma).
pub fn sample_composite(rng: &mut Xoshiro256pp, family: u8, mu: f64, sigma: f64) -> f64 {
    let v = match family {
        // Triangular / Normal / Exponential, equal thirds.
        1 => match rng.next_below(3) {
            0 => dist::triangular(rng, mu - 2.0 * sigma, mu - 1.5 * sigma, mu),
            1 => dist::normal(rng, mu + sigma, 0.3 * sigma),
            _ => dist::exponential(rng, 0.7 * sigma) + (mu - 0.5 * sigma),
        },
        // Pareto / Uniform / Logistic, equal thirds.
        2 => match rng.next_below(3) {
            0 => dist::pareto(rng, 1.5) * sigma + (mu - 2.0 * sigma),
            1 => dist::uniform(rng, mu - 1.5 * sigma, mu + 1.5 * sigma),
            _ => dist::logistic(rng, mu, sigma),
        },
        // Beta / Signed-Exp / Spike-Normal, equal thirds; the sign and the
        // spike offset are drawn uniformly per element.
        3 => match rng.next_below(3) {
            0 => dist::beta(rng, 0.5, 0.5) * 4.0 * sigma + (mu - 2.0 * sigma),
            1 => {
                let s = if dist::bernoulli(rng, 0.5) { -1.0 } else { 1.0 };
                dist::exponential(rng, 0.4 * sigma) * s + mu
            }
            _ => {
                let v = if dist::bernoulli(rng, 0.5) { 2.0 * sigma } else { 0.0 };
                dist::normal(rng, mu, 0.5 * sigma) + v
            }
        },
        // Gamma / Weibull / Shifted-Normal, equal thirds; shift sign drawn
        // uniformly per element.
        4 => match rng.next_below(3) {
            0 => dist::gamma(rng, 2.0, 0.5 * sigma) + (mu - sigma),
            1 => dist::weibull(rng, 1.0, sigma) + (mu - sigma),
            _ => {
                let s = if dist::bernoulli(rng, 0.5) { -1.0 } else { 1.0 };
                dist::normal(rng, mu, 0.5 * sigma) + s * sigma
            }
        },
        // Heavy-tailed Cauchy.
        5 => dist::cauchy(rng, mu, sigma),
        // Bimodal: narrow normal spike (10%) + wide logistic (90%).
        6 => {
            if dist::bernoulli(rng, 0.10) {
                dist::normal(rng, mu, 0.2 * sigma)
            } else {
                dist::logistic(rng, mu + sigma, 2.0 * sigma)
            }
        }
        other => panic!("composite family index out of range: {other}"),
    };
    let noisy = v + dist::normal(rng, 0.0, 0.2 * sigma);
    let half_width = if family == 5 { 4.0 } else { 5.0 } * sigma;
    noisy.clamp(mu - half_width, mu + half_width)
}

/// Logistic transition rate: `max(1, |R| / sqrt(theta_sigma^2 +
/// phi_sigma^2))`.
pub fn transition_rate(r: f64, theta_sigma: f64, phi_sigma: f64) -> f64 {
    let denom = (theta_sigma * theta_sigma + phi_sigma * phi_sigma).sqrt();
    (r.abs() / denom).max(1.0)
}

/// Sigmoid deviation from the pre-event baseline at stage `k` for an event
/// at `xi`: `delta * r / (1 + exp(-rho (k - xi)))`. Approaches 0 far before
/// the event and `delta * r` far after it.
pub fn sigmoid_shift(delta: f64, r: f64, rho: f64, k: f64, xi: f64) -> f64 {
    delta * r / (1.0 + (-rho * (k - xi)).exp())
}

/// Sigmoid-progression measurements: everyone receives a pre-event
/// baseline `x0 ~ N(phi_mu, phi_sigma)`; healthy participants (k = 0) keep
/// it and diseased participants additionally receive the signed sigmoid
/// shift. Continuous-event experiments jitter the event time per cell.
pub fn measure_sigmoid(
    xi: &[f64],
    k: &[f64],
    params: &BiomarkerParams,
    delta: &[i8],
    event_noise_sd: f64,
    rng: &mut Xoshiro256pp,
) -> Vec<f64> {
    let b_count = xi.len();
    let mut x = Vec::with_capacity(k.len() * b_count);
    for &kj in k {
        for b in 0..b_count {
            let x0 = dist::normal(rng, params.phi_mu[b], params.phi_sigma[b]);
            if kj == 0.0 {
                x.push(x0);
                continue;
            }
            let xi_eff = if event_noise_sd > 0.0 {
                xi[b] + dist::normal(rng, 0.0, event_noise_sd)
            } else {
                xi[b]
            };
            let r = params.theta_mu[b] - params.phi_mu[b];
            let rho = transition_rate(r, params.theta_sigma[b], params.phi_sigma[b]);
            x.push(x0 + sigmoid_shift(delta[b] as f64, r, rho, kj, xi_eff));
        }
    }
    x
}
