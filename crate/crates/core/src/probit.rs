//! Probit EM variable selection with latent-response imputation.
//!
//! Every iteration replaces the binary labels by the conditional means of
//! their unit-variance latent normals, runs the shared E-step with σ fixed at
//! 1, and solves the resulting generalized ridge problem for β, either exactly
//! or with squared-loss SDCA.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EmvsError, Result};
use crate::estep::{e_step, theta_update};
use crate::linalg::GrrSolver;
use crate::logistic::{
    linear_predictor, log_mixture_prior, log_theta_prior, parameter_change, ridge_logistic_start,
    validate_common, BetaInit,
};
use crate::numeric::{derive_seed, log_normal_cdf, mills_excess, normal_cdf};
use crate::sdca::{solve_sdca_squared_from, PenalizedProblem, RowMajorDesign, SolverConfig};
use crate::types::{recode, selection_from, Dataset, EmState, FitResult, LabelCoding, SpikeSlabHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaSolver {
    /// Exact generalized ridge regression.
    Grr,
    /// Squared-loss SDCA on the same objective.
    Sdca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitEmConfig {
    pub hyper: SpikeSlabHyper,
    pub max_em_iterations: usize,
    pub sdca: SolverConfig,
    pub beta_solver: BetaSolver,
    pub beta_init: BetaInit,
    pub theta_init: f64,
    pub convergence_tol: f64,
}

impl ProbitEmConfig {
    pub fn new(hyper: SpikeSlabHyper) -> Self {
        ProbitEmConfig {
            hyper,
            max_em_iterations: 100,
            sdca: SolverConfig::default(),
            beta_solver: BetaSolver::Grr,
            beta_init: BetaInit::Auto,
            theta_init: 0.5,
            convergence_tol: 1e-6,
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
        )
    }
}

/// Conditional means of the latent responses:
/// `E[z | y = 1] = m + φ(m)/Φ(m)` and `E[z | y = 0] = m − φ(m)/Φ(−m)` with
/// `m = xᵀβ`. Labels other than 1 are treated as 0.
///
/// Computed as signed truncated-normal mean excesses, so `z > 0` exactly
/// when `y = 1` for every finite margin.
pub fn impute_latent(x: &DMatrix<f64>, y: &[i32], beta: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.nrows() {
        return Err(EmvsError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let m = linear_predictor(beta, x)?;
    Ok(m.iter().zip(y).map(|(&mi, &yi)| latent_mean(mi, yi)).collect())
}

fn latent_mean(m: f64, y: i32) -> f64 {
    if y == 1 {
        mills_excess(-m)
    } else {
        -mills_excess(m)
    }
}

/// Row-wise Φ(xᵀβ).
pub fn predict_probit(beta: &[f64], x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(linear_predictor(beta, x_new)?
        .iter()
        .map(|&m| normal_cdf(m))
        .collect())
}

/// Observed-data log posterior of (β, θ) with σ = 1, up to a constant.
pub fn log_posterior_probit(d: &Dataset, state: &EmState, h: &SpikeSlabHyper) -> f64 {
    let margins = &d.x * DVector::from_column_slice(&state.beta);
    let loglik: f64 = margins
        .iter()
        .zip(&d.y)
        .map(|(&m, &y)| if y == 1 { log_normal_cdf(m) } else { log_normal_cdf(-m) })
        .sum();
    let prior_beta: f64 = state
        .beta
        .iter()
        .map(|&b| log_mixture_prior(b, 1.0, state.theta, h))
        .sum();
    loglik + prior_beta + log_theta_prior(state.theta, h)
}

/// β-step of the probit engine: minimizer of ½‖z − Xβ‖² + ½ Σ_j d_j β_j².
pub struct ProbitBetaStep<'a> {
    solver: BetaSolver,
    grr: Option<GrrSolver>,
    rows: Option<RowMajorDesign>,
    sdca: &'a SolverConfig,
    alpha: Option<Vec<f64>>,
    last_gap: Option<f64>,
}

impl<'a> ProbitBetaStep<'a> {
    pub fn new(x: &DMatrix<f64>, solver: BetaSolver, sdca: &'a SolverConfig) -> Self {
        let (grr, rows) = match solver {
            BetaSolver::Grr => (Some(GrrSolver::new(x)), None),
            BetaSolver::Sdca => (None, Some(RowMajorDesign::from_matrix(x))),
        };
        ProbitBetaStep {
            solver,
            grr,
            rows,
            sdca,
            alpha: None,
            last_gap: None,
        }
    }

    /// Duality gap of the last SDCA solve; `None` for GRR.
    pub fn last_gap(&self) -> Option<f64> {
        self.last_gap
    }

    /// Solves for β; `seed` feeds the SDCA picks and is ignored by GRR. The
    /// SDCA path warm-starts from the previous call's dual.
    pub fn solve(&mut self, z: &[f64], d_star: &[f64], seed: u64) -> Result<Vec<f64>> {
        match self.solver {
            BetaSolver::Grr => self.grr.as_ref().expect("grr solver").solve(z, d_star),
            BetaSolver::Sdca => {
                let rows = self.rows.as_ref().expect("row-major design");
                let n = rows.nrows() as f64;
                let penalty = d_star.iter().map(|dj| dj / n).collect();
                let prob = PenalizedProblem::squared(rows, z, penalty)?;
                let cfg = SolverConfig {
                    seed,
                    ..self.sdca.clone()
                };
                let out = solve_sdca_squared_from(&prob, &cfg, self.alpha.as_deref())?;
                self.alpha = Some(out.alpha);
                self.last_gap = Some(out.duality_gap);
                Ok(out.w)
            }
        }
    }
}

/// Runs probit EM variable selection. Labels in {−1, 1} are recoded to 0/1.
pub fn fit_probit(d: &Dataset, cfg: &ProbitEmConfig) -> Result<FitResult> {
    let start = Instant::now();
    let d = if d.coding == LabelCoding::ZeroOne {
        d.clone()
    } else {
        recode(d, LabelCoding::ZeroOne)
    };
    let p = d.p();
    cfg.validate(p)?;
    let h = &cfg.hyper;

    let beta0 = match &cfg.beta_init {
        BetaInit::Auto => {
            let rows = RowMajorDesign::from_matrix(&d.x);
            ridge_logistic_start(&rows, &d.signed_labels(), &cfg.sdca)?.0
        }
        BetaInit::Explicit(b) => b.clone(),
    };
    let mut step = ProbitBetaStep::new(&d.x, cfg.beta_solver, &cfg.sdca);

    let mut state = e_step(&EmState::initial(beta0, 1.0, cfg.theta_init), h);
    let mut trace = vec![log_posterior_probit(&d, &state, h)];
    let mut converged = false;
    let mut gaps = Vec::new();

    for k in 1..=cfg.max_em_iterations {
        let z = impute_latent(&d.x, &d.y, &state.beta)?;
        let beta = step.solve(&z, &state.d_star, derive_seed(cfg.sdca.seed, k as u64))?;
        gaps.extend(step.last_gap());
        let theta = theta_update(&state.p_star, h);
        let change = parameter_change(&beta, &state.beta).max((theta - state.theta).abs());
        state = e_step(
            &EmState {
                beta,
                theta,
                iteration: k,
                ..state
            },
            h,
        );
        trace.push(log_posterior_probit(&d, &state, h));
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
