//! E-step of the spike-and-slab EM: inclusion probabilities and expected
//! prior precisions given the current (β, σ, θ).

use crate::numeric::sigmoid;
use crate::types::{EmState, SpikeSlabHyper};

/// Posterior probability that coordinate j comes from the slab.
///
/// Evaluated as a logistic transform of the log-odds
/// `log θ/(1−θ) + log N(β; 0, σ²ν₁) − log N(β; 0, σ²ν₀)` so tiny spike
/// variances never underflow.
pub fn inclusion_probability(beta_j: f64, sigma: f64, theta: f64, h: &SpikeSlabHyper) -> f64 {
    if h.nu0 == h.nu1 {
        return theta;
    }
    let s2 = sigma * sigma;
    let log_density_ratio =
        0.5 * (h.nu0 / h.nu1).ln() + 0.5 * beta_j * beta_j / s2 * (1.0 / h.nu0 - 1.0 / h.nu1);
    let prior_log_odds = theta.ln() - (-theta).ln_1p();
    sigmoid(prior_log_odds + log_density_ratio)
}

/// d*_j = (1 − p*_j)/ν₀ + p*_j/ν₁.
pub fn expected_precision(p_star_j: f64, h: &SpikeSlabHyper) -> f64 {
    (1.0 - p_star_j) / h.nu0 + p_star_j / h.nu1
}

/// Recomputes `p_star` and `d_star` from the state's (β, σ, θ).
pub fn e_step(state: &EmState, h: &SpikeSlabHyper) -> EmState {
    let p_star: Vec<f64> = state
        .beta
        .iter()
        .map(|&b| inclusion_probability(b, state.sigma, state.theta, h))
        .collect();
    let d_star = p_star.iter().map(|&p| expected_precision(p, h)).collect();
    EmState {
        p_star,
        d_star,
        ..state.clone()
    }
}

/// θ update shared by both engines: (Σ_j p*_j + a − 1) / (a + b + p − 2),
/// kept inside the open unit interval.
pub fn theta_update(p_star: &[f64], h: &SpikeSlabHyper) -> f64 {
    let p = p_star.len() as f64;
    let num = p_star.iter().sum::<f64>() + h.a - 1.0;
    let den = h.a + h.b + p - 2.0;
    (num / den).clamp(THETA_FLOOR, 1.0 - THETA_FLOOR)
}

pub(crate) const THETA_FLOOR: f64 = 1e-12;
