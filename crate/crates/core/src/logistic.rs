//! Logistic-likelihood EM variable selection.
//!
//! Each iteration runs the shared E-step, then an M-step in three pieces: β
//! from a Prox-SDCA solve of the ridge-logistic problem with per-coordinate
//! penalties taken from d*, σ in closed form, and θ in closed form.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EmvsError, Result};
use crate::estep::{e_step, theta_update};
use crate::numeric::{derive_seed, normal_log_pdf, sigmoid, softplus};
use crate::sdca::{solve_prox_sdca_logistic_from, PenalizedProblem, RowMajorDesign, SolverConfig};
use crate::types::{selection_from, Dataset, EmState, FitResult, LabelCoding, SpikeSlabHyper};

/// How d* becomes the solver's per-coordinate penalty λ*.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyMode {
    /// λ*_j = d*_j.
    PaperLiteral,
    /// λ*_j = d*_j / (n σ²), so n times the solver objective equals the
    /// β-dependent part of the expected complete-data log posterior.
    Q1Consistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaInit {
    /// Ridge-logistic Prox-SDCA solve with uniform penalty 1/n.
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticEmConfig {
    pub hyper: SpikeSlabHyper,
    pub max_em_iterations: usize,
    pub sdca: SolverConfig,
    pub beta_init: BetaInit,
    pub theta_init: f64,
    pub sigma_init: f64,
    /// Stop once the ∞-norm change in (β, σ, θ) falls below this.
    pub convergence_tol: f64,
    pub penalty_mode: PenaltyMode,
    /// Extra multiplier on λ* (1 leaves the mapping untouched).
    pub penalty_scale: f64,
}

impl LogisticEmConfig {
    pub fn new(hyper: SpikeSlabHyper) -> Self {
        LogisticEmConfig {
            hyper,
            max_em_iterations: 100,
            sdca: SolverConfig::default(),
            beta_init: BetaInit::Auto,
            theta_init: 0.5,
            sigma_init: 1.0,
            convergence_tol: 1e-6,
            penalty_mode: PenaltyMode::PaperLiteral,
            penalty_scale: 1.0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.hyper.validate()?;
        self.sdca.validate()?;
        validate_common(
            self.max_em_iterations,
            &self.beta_init,
            self.theta_init,
            self.convergence_tol,
            p,
        )?;
        if !(self.sigma_init.is_finite() && self.sigma_init > 0.0) {
            return Err(EmvsError::InvalidConfig("sigma_init must be positive".into()));
        }
        if !(self.penalty_scale.is_finite() && self.penalty_scale > 0.0) {
            return Err(EmvsError::InvalidConfig(
                "penalty_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn validate_common(
    max_em_iterations: usize,
    beta_init: &BetaInit,
    theta_init: f64,
    tol: f64,
    p: usize,
) -> Result<()> {
    if max_em_iterations == 0 {
        return Err(EmvsError::InvalidConfig(
            "max_em_iterations must be positive".into(),
        ));
    }
    if !(theta_init > 0.0 && theta_init < 1.0) {
        return Err(EmvsError::InvalidConfig(format!(
            "theta_init must lie in (0, 1), got {theta_init}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(EmvsError::InvalidConfig(
            "convergence_tol must be positive".into(),
        ));
    }
    if let BetaInit::Explicit(b) = beta_init {
        if b.len() != p {
            return Err(EmvsError::DimensionMismatch {
                expected: p,
                found: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(EmvsError::NonFinite);
        }
    }
    Ok(())
}

/// Ridge-logistic starting point: Prox-SDCA with λ*_j = 1/n. Returns the
/// coefficients and the dual vector for warm starts.
pub(crate) fn ridge_logistic_start(
    rows: &RowMajorDesign,
    labels: &[f64],
    sdca: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rows.nrows() as f64;
    let prob = PenalizedProblem::logistic(rows, labels, vec![1.0 / n; rows.ncols()])?;
    let cfg = SolverConfig {
        seed: derive_seed(sdca.seed, 0),
        ..sdca.clone()
    };
    let out = solve_prox_sdca_logistic_from(&prob, &cfg, None)?;
    Ok((out.w, out.alpha))
}

/// Runs logistic EM variable selection. Labels in {0, 1} are recoded to ±1.
pub fn fit_logistic(d: &Dataset, cfg: &LogisticEmConfig) -> Result<FitResult> {
    let start = Instant::now();
    let d = if d.coding == LabelCoding::PlusMinusOne {
        d.clone()
    } else {
        crate::types::recode(d, LabelCoding::PlusMinusOne)
    };
    let (n, p) = (d.n(), d.p());
    cfg.validate(p)?;
    let h = &cfg.hyper;
    let rows = RowMajorDesign::from_matrix(&d.x);
    let labels = d.signed_labels();

    let (beta0, mut alpha) = match &cfg.beta_init {
        BetaInit::Auto => ridge_logistic_start(&rows, &labels, &cfg.sdca)?,
        BetaInit::Explicit(b) => (b.clone(), vec![0.0; n]),
    };

    let mut state = e_step(&EmState::initial(beta0, cfg.sigma_init, cfg.theta_init), h);
    let mut trace = vec![log_posterior_logistic(&d, &state, h)];
    let mut converged = false;
    let mut gaps = Vec::new();

    for k in 1..=cfg.max_em_iterations {
        let penalty: Vec<f64> = state
            .d_star
            .iter()
            .map(|&dj| {
                cfg.penalty_scale
                    * match cfg.penalty_mode {
                        PenaltyMode::PaperLiteral => dj,
                        PenaltyMode::Q1Consistent => {
                            dj / (n as f64 * state.sigma * state.sigma)
                        }
                    }
            })
            .collect();
        let prob = PenalizedProblem::logistic(&rows, &labels, penalty)?;
        let solver_cfg = SolverConfig {
            seed: derive_seed(cfg.sdca.seed, k as u64),
            ..cfg.sdca.clone()
        };
        let out = solve_prox_sdca_logistic_from(&prob, &solver_cfg, Some(&alpha))?;
        alpha = out.alpha;
        gaps.push(out.duality_gap);
        let beta = out.w;

        let weighted: f64 = state
            .d_star
            .iter()
            .zip(&beta)
            .map(|(dj, b)| dj * b * b)
            .sum();
        let sigma = ((weighted + h.nu * h.lambda) / (p as f64 + h.nu + 2.0)).sqrt();
        let theta = theta_update(&state.p_star, h);

        let change = parameter_change(&beta, &state.beta)
            .max((theta - state.theta).abs())
            .max((sigma - state.sigma).abs());
        state = e_step(
            &EmState {
                beta,
                sigma,
                theta,
                iteration: k,
                ..state
            },
            h,
        );
        trace.push(log_posterior_logistic(&d, &state, h));
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        selected: selection_from(&state.p_star),
        state,
        converged,
        objective_trace: trace,
        solver_gaps: gaps,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// ∞-norm of `a − b`.
pub(crate) fn parameter_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// log[θ N(β; 0, σ²ν₁) + (1 − θ) N(β; 0, σ²ν₀)]
pub(crate) fn log_mixture_prior(beta: f64, sigma: f64, theta: f64, h: &SpikeSlabHyper) -> f64 {
    let s2 = sigma * sigma;
    let slab = theta.ln() + normal_log_pdf(beta, s2 * h.nu1);
    let spike = (-theta).ln_1p() + normal_log_pdf(beta, s2 * h.nu0);
    let m = slab.max(spike);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((slab - m).exp() + (spike - m).exp()).ln()
}

/// Observed-data log posterior of (β, σ, θ) up to an additive constant, with
/// the inclusion indicators summed out.
pub fn log_posterior_logistic(d: &Dataset, state: &EmState, h: &SpikeSlabHyper) -> f64 {
    let margins = &d.x * DVector::from_column_slice(&state.beta);
    let loglik: f64 = margins
        .iter()
        .zip(&d.y)
        .map(|(m, &y)| {
            let s = if y == 1 { 1.0 } else { -1.0 };
            -softplus(-s * m)
        })
        .sum();
    let prior_beta: f64 = state
        .beta
        .iter()
        .map(|&b| log_mixture_prior(b, state.sigma, state.theta, h))
        .sum();
    let s2 = state.sigma * state.sigma;
    let prior_sigma = -(h.nu + 2.0) / 2.0 * s2.ln() - h.nu * h.lambda / (2.0 * s2);
    loglik + prior_beta + prior_sigma + log_theta_prior(state.theta, h)
}

pub(crate) fn log_theta_prior(theta: f64, h: &SpikeSlabHyper) -> f64 {
    let term = |c: f64, v: f64| if c == 0.0 { 0.0 } else { c * v.ln() };
    term(h.a - 1.0, theta) + term(h.b - 1.0, 1.0 - theta)
}

pub(crate) fn linear_predictor(beta: &[f64], x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x_new.ncols() != beta.len() {
        return Err(EmvsError::DimensionMismatch {
            expected: beta.len(),
            found: x_new.ncols(),
        });
    }
    Ok(x_new * DVector::from_column_slice(beta))
}

/// Row-wise 1 / (1 + exp(−xᵀβ)).
pub fn predict_logistic(beta: &[f64], x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(linear_predictor(beta, x_new)?.iter().map(|&m| sigmoid(m)).collect())
}
