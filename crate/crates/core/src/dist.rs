//! Random-variate samplers on top of [`Xoshiro256pp`].
//!
//! Implemented locally (rather than pulled from a distributions crate) so
//! that every draw is pinned to a documented algorithm and the byte-level
//! reproducibility contract of the generator does not depend on an external
//! crate's sampling internals.
//!
//! Algorithms:
//! * normal — Box–Muller, two uniforms per draw (no cached spare);
//! * gamma — Marsaglia–Tsang squeeze method, boosted for shape < 1;
//! * beta — ratio of two gammas; dirichlet — normalized gammas;
//! * the remaining families use inverse-CDF transforms.

use crate::rng::Xoshiro256pp;
use std::f64::consts::PI;

/// Standard normal via Box–Muller. Consumes exactly two uniforms.
pub fn standard_normal(rng: &mut Xoshiro256pp) -> f64 {
    let u1 = rng.next_open01();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Normal with mean `mu` and standard deviation `sd` (sd = 0 is allowed and
/// yields `mu` while still consuming the same two uniforms).
pub fn normal(rng: &mut Xoshiro256pp, mu: f64, sd: f64) -> f64 {
    debug_assert!(sd >= 0.0);
    mu + sd * standard_normal(rng)
}

/// Gamma(shape, scale) via Marsaglia–Tsang (2000). For shape < 1 uses the
/// boost `Gamma(a) = Gamma(a + 1) * U^{1/a}`.
pub fn gamma(rng: &mut Xoshiro256pp, shape: f64, scale: f64) -> f64 {
    assert!(shape > 0.0 && scale > 0.0, "gamma(shape={shape}, scale={scale})");
    if shape < 1.0 {
        let boost = rng.next_open01().powf(1.0 / shape);
        return gamma(rng, shape + 1.0, scale) * boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u = rng.next_open01();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v * scale;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v * scale;
        }
    }
}

/// Beta(a, b) as `X / (X + Y)` with independent `X ~ Gamma(a, 1)`,
/// `Y ~ Gamma(b, 1)`.
pub fn beta(rng: &mut Xoshiro256pp, a: f64, b: f64) -> f64 {
    let x = gamma(rng, a, 1.0);
    let y = gamma(rng, b, 1.0);
    x / (x + y)
}

/// Dirichlet(alpha) via normalized gamma draws.
pub fn dirichlet(rng: &mut Xoshiro256pp, alpha: &[f64]) -> Vec<f64> {
    assert!(!alpha.is_empty());
    let draws: Vec<f64> = alpha.iter().map(|&a| gamma(rng, a, 1.0)).collect();
    let sum: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / sum).collect()
}

/// Categorical draw over `probs` (assumed to sum to ~1); returns an index.
pub fn categorical(rng: &mut Xoshiro256pp, probs: &[f64]) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Uniform in [lo, hi).
pub fn uniform(rng: &mut Xoshiro256pp, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

pub fn bernoulli(rng: &mut Xoshiro256pp, p: f64) -> bool {
    rng.next_f64() < p
}

/// Exponential with the given scale (mean). Inverse CDF.
pub fn exponential(rng: &mut Xoshiro256pp, scale: f64) -> f64 {
    -scale * rng.next_open01().ln()
}

/// Logistic(location, scale). Inverse CDF.
pub fn logistic(rng: &mut Xoshiro256pp, location: f64, scale: f64) -> f64 {
    let u = midpoint_open(rng);
    location + scale * (u / (1.0 - u)).ln()
}

/// Cauchy(location, scale). Inverse CDF via tangent.
pub fn cauchy(rng: &mut Xoshiro256pp, location: f64, scale: f64) -> f64 {
    let u = midpoint_open(rng);
    location + scale * (PI * (u - 0.5)).tan()
}

/// Pareto with shape `alpha` and minimum 1. Inverse CDF.
pub fn pareto(rng: &mut Xoshiro256pp, alpha: f64) -> f64 {
    rng.next_open01().powf(-1.0 / alpha)
}

/// Weibull(shape, scale). Inverse CDF.
pub fn weibull(rng: &mut Xoshiro256pp, shape: f64, scale: f64) -> f64 {
    scale * (-rng.next_open01().ln()).powf(1.0 / shape)
}

/// Triangular(min, mode, max). Inverse CDF.
pub fn triangular(rng: &mut Xoshiro256pp, min: f64, mode: f64, max: f64) -> f64 {
    debug_assert!(min <= mode && mode <= max && min < max);
    let u = rng.next_f64();
    let f = (mode - min) / (max - min);
    if u < f {
        min + (u * (max - min) * (mode - min)).sqrt()
    } else {
        max - ((1.0 - u) * (max - min) * (max - mode)).sqrt()
    }
}

/// Uniform strictly inside (0, 1); avoids both endpoints so logit/tan
/// transforms stay finite.
fn midpoint_open(rng: &mut Xoshiro256pp) -> f64 {
    // (k + 0.5) / 2^53 for k in [0, 2^53): never 0, never 1.
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
