//! Stochastic dual coordinate ascent for per-coordinate ridge-penalized
//! problems
//!
//! ```text
//! P(w) = (1/n) Σ_i φ_i(x_iᵀw) + ½ Σ_j λ_j w_j²
//! D(α) = (1/n) Σ_i −φ_i*(−α_i) − ½ Σ_j λ_j w_j(α)²,   w_j(α) = Σ_i α_i x_ij / (λ_j n)
//! ```
//!
//! Two losses are supported: logistic, φ_i(a) = log(1 + exp(−y_i a)), solved
//! with the proximal step-size rule (no inner Newton iterations), and squared,
//! φ_i(a) = ½(a − z_i)², solved with the exact closed-form coordinate step.
//!
//! Dual vectors are exposed in the convention above: for the logistic loss a
//! feasible α satisfies α_i·y_i ∈ [0, 1].

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{EmvsError, Result};
use crate::numeric::{rng_from_seed, sigmoid, softplus};

/// Dual iterates are kept at least this far from the boundary of [0, 1].
pub const DUAL_EPS: f64 = 1e-12;

/// Row-major copy of a design matrix, the layout every dual step reads.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMajorDesign {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl RowMajorDesign {
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            data.extend(x.row(i).iter());
        }
        RowMajorDesign { data, n, p }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        dot(self.row(i), w)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Logistic,
    Squared,
}

/// A penalized empirical-risk problem over a borrowed design.
#[derive(Debug, Clone)]
pub struct PenalizedProblem<'a> {
    x: &'a RowMajorDesign,
    /// ±1 labels for the logistic loss, real targets for the squared loss.
    targets: &'a [f64],
    penalty: Vec<f64>,
    loss: Loss,
}

impl<'a> PenalizedProblem<'a> {
    pub fn new(
        x: &'a RowMajorDesign,
        targets: &'a [f64],
        penalty: Vec<f64>,
        loss: Loss,
    ) -> Result<Self> {
        if targets.len() != x.nrows() {
            return Err(EmvsError::DimensionMismatch {
                expected: x.nrows(),
                found: targets.len(),
            });
        }
        if penalty.len() != x.ncols() {
            return Err(EmvsError::DimensionMismatch {
                expected: x.ncols(),
                found: penalty.len(),
            });
        }
        if let Some(bad) = penalty.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(EmvsError::InvalidConfig(format!(
                "penalty weights must be positive and finite, got {bad}"
            )));
        }
        if loss == Loss::Logistic && targets.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(EmvsError::InvalidConfig(
                "logistic targets must be ±1".into(),
            ));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(EmvsError::NonFinite);
        }
        Ok(PenalizedProblem {
            x,
            targets,
            penalty,
            loss,
        })
    }

    pub fn logistic(x: &'a RowMajorDesign, labels: &'a [f64], penalty: Vec<f64>) -> Result<Self> {
        Self::new(x, labels, penalty, Loss::Logistic)
    }

    pub fn squared(x: &'a RowMajorDesign, z: &'a [f64], penalty: Vec<f64>) -> Result<Self> {
        Self::new(x, z, penalty, Loss::Squared)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn penalty(&self) -> &[f64] {
        &self.penalty
    }

    pub fn design(&self) -> &RowMajorDesign {
        self.x
    }

    pub fn targets(&self) -> &[f64] {
        self.targets
    }

    /// w(α).
    pub fn primal_from_dual(&self, alpha: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let mut w = vec![0.0; self.p()];
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (wj, xij) in w.iter_mut().zip(self.x.row(i)) {
                    *wj += a * xij;
                }
            }
        }
        for (wj, lj) in w.iter_mut().zip(&self.penalty) {
            *wj /= lj * n;
        }
        w
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.penalty)
            .map(|(wj, lj)| lj * wj * wj)
            .sum::<f64>()
    }

    pub fn primal_value(&self, w: &[f64]) -> f64 {
        let n = self.n();
        let loss: f64 = (0..n)
            .map(|i| {
                let m = self.x.row_dot(i, w);
                match self.loss {
                    Loss::Logistic => softplus(-self.targets[i] * m),
                    Loss::Squared => 0.5 * (m - self.targets[i]).powi(2),
                }
            })
            .sum();
        loss / n as f64 + self.regularizer(w)
    }

    /// D(α); −∞ when α is infeasible for the logistic loss.
    pub fn dual_value(&self, alpha: &[f64]) -> f64 {
        let n = self.n();
        let conj: f64 = match self.loss {
            Loss::Logistic => alpha
                .iter()
                .zip(self.targets)
                .map(|(a, y)| -logistic_conjugate(a * y))
                .sum(),
            Loss::Squared => alpha
                .iter()
                .zip(self.targets)
                .map(|(a, z)| a * z - 0.5 * a * a)
                .sum(),
        };
        conj / n as f64 - self.regularizer(&self.primal_from_dual(alpha))
    }
}

/// b log b + (1 − b) log(1 − b) on [0, 1], +∞ outside.
pub fn logistic_conjugate(b: f64) -> f64 {
    if !(0.0..=1.0).contains(&b) {
        return f64::INFINITY;
    }
    let xlogx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    xlogx(b) + xlogx(1.0 - b)
}

/// P(w) − D(α).
pub fn duality_gap(prob: &PenalizedProblem<'_>, w: &[f64], alpha: &[f64]) -> f64 {
    prob.primal_value(w) - prob.dual_value(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Total coordinate picks T (not epochs).
    pub max_picks: usize,
    pub seed: u64,
    /// Averaging starts after this many picks; `None` means T/2.
    pub averaging_start: Option<usize>,
    pub gap_tolerance: f64,
    /// Picks between duality-gap checks; `None` means one check per n picks.
    pub check_interval: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_picks: 5000,
            seed: 0,
            averaging_start: None,
            gap_tolerance: 1e-8,
            check_interval: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_picks == 0 {
            return Err(EmvsError::InvalidConfig("max_picks must be positive".into()));
        }
        if let Some(t0) = self.averaging_start {
            if t0 >= self.max_picks {
                return Err(EmvsError::InvalidConfig(format!(
                    "averaging start {t0} must be below max_picks {}",
                    self.max_picks
                )));
            }
        }
        if !(self.gap_tolerance.is_finite() && self.gap_tolerance > 0.0) {
            return Err(EmvsError::InvalidConfig(
                "gap_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn averaging_start_for(&self) -> usize {
        self.averaging_start.unwrap_or(self.max_picks / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    /// Averaged primal iterate, or the certified current iterate when the gap
    /// tolerance was met early.
    pub w: Vec<f64>,
    /// Dual vector paired with `w` (w = w(alpha)).
    pub alpha: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub picks_used: usize,
    /// Number of dual updates pulled back inside [ε, 1 − ε].
    pub clamp_events: usize,
}

/// Prox-SDCA for the logistic loss, starting from α = 0.
pub fn solve_prox_sdca_logistic(
    prob: &PenalizedProblem<'_>,
    cfg: &SolverConfig,
) -> Result<SolverOutput> {
    solve_prox_sdca_logistic_from(prob, cfg, None)
}

/// Prox-SDCA for the logistic loss with an optional warm-start dual.
pub fn solve_prox_sdca_logistic_from(
    prob: &PenalizedProblem<'_>,
    cfg: &SolverConfig,
    warm_alpha: Option<&[f64]>,
) -> Result<SolverOutput> {
    if prob.loss != Loss::Logistic {
        return Err(EmvsError::InvalidConfig(
            "logistic solver called on a squared-loss problem".into(),
        ));
    }
    let mut clamp_events = 0;
    let alpha0 = match warm_alpha {
        Some(a) => {
            check_len(a, prob.n())?;
            // stored in the feasible set already; only repair round-off
            a.iter()
                .zip(prob.targets)
                .map(|(&ai, &y)| {
                    let b = ai * y;
                    if (0.0..=1.0).contains(&b) {
                        ai
                    } else {
                        clamp_events += 1;
                        b.clamp(DUAL_EPS, 1.0 - DUAL_EPS) * y
                    }
                })
                .collect()
        }
        None => vec![0.0; prob.n()],
    };
    run(prob, cfg, alpha0, clamp_events, LogisticStep)
}

/// SDCA for the squared loss, starting from α = 0.
pub fn solve_sdca_squared(prob: &PenalizedProblem<'_>, cfg: &SolverConfig) -> Result<SolverOutput> {
    solve_sdca_squared_from(prob, cfg, None)
}

pub fn solve_sdca_squared_from(
    prob: &PenalizedProblem<'_>,
    cfg: &SolverConfig,
    warm_alpha: Option<&[f64]>,
) -> Result<SolverOutput> {
    if prob.loss != Loss::Squared {
        return Err(EmvsError::InvalidConfig(
            "squared-loss solver called on a logistic problem".into(),
        ));
    }
    let alpha0 = match warm_alpha {
        Some(a) => {
            check_len(a, prob.n())?;
            a.to_vec()
        }
        None => vec![0.0; prob.n()],
    };
    run(prob, cfg, alpha0, 0, SquaredStep)
}

fn check_len(a: &[f64], n: usize) -> Result<()> {
    if a.len() != n {
        return Err(EmvsError::DimensionMismatch {
            expected: n,
            found: a.len(),
        });
    }
    Ok(())
}

/// One dual coordinate update: returns the new α_i.
trait DualStep {
    /// `margin` = x_iᵀw, `curvature` = Σ_j x_ij² / (λ_j n).
    fn step(&self, alpha_i: f64, target: f64, margin: f64, curvature: f64, clamps: &mut usize)
        -> f64;
}

struct LogisticStep;

impl DualStep for LogisticStep {
    fn step(
        &self,
        alpha_i: f64,
        y: f64,
        margin: f64,
        curvature: f64,
        clamps: &mut usize,
    ) -> f64 {
        // Rows are taken as x̃_i = −y_i x_i and duals as α̃_i = −y_i α_i,
        // so that the loss is log(1 + exp(x̃_iᵀw)) and α̃_i ∈ [−1, 0].
        let p = -y * margin;
        let a = -y * alpha_i;
        let q = -sigmoid(p) - a;
        if q == 0.0 {
            return alpha_i;
        }
        let num = softplus(p) + logistic_conjugate(-a) + p * a + 2.0 * q * q;
        let den = q * q * (4.0 + curvature);
        let s = (num / den).min(1.0);
        let mut b = -(a + s * q);
        if !(DUAL_EPS..=1.0 - DUAL_EPS).contains(&b) {
            *clamps += 1;
            b = b.clamp(DUAL_EPS, 1.0 - DUAL_EPS);
        }
        // back to the exposed convention: α_i = −y_i α̃_i = y_i b
        y * b
    }
}

struct SquaredStep;

impl DualStep for SquaredStep {
    fn step(&self, alpha_i: f64, z: f64, margin: f64, curvature: f64, _: &mut usize) -> f64 {
        alpha_i + (z - margin - alpha_i) / (1.0 + curvature)
    }
}

fn run<S: DualStep>(
    prob: &PenalizedProblem<'_>,
    cfg: &SolverConfig,
    mut alpha: Vec<f64>,
    mut clamp_events: usize,
    stepper: S,
) -> Result<SolverOutput> {
    cfg.validate()?;
    let n = prob.n();
    let p = prob.p();
    let nf = n as f64;
    let scale: Vec<f64> = prob.penalty.iter().map(|l| 1.0 / (l * nf)).collect();
    let curvature: Vec<f64> = (0..n)
        .map(|i| {
            prob.x
                .row(i)
                .iter()
                .zip(&scale)
                .map(|(x, s)| x * x * s)
                .sum()
        })
        .collect();
    let mut w = prob.primal_from_dual(&alpha);

    let finish = |w: Vec<f64>, alpha: Vec<f64>, picks: usize, clamps: usize| {
        let primal_value = prob.primal_value(&w);
        let dual_value = prob.dual_value(&alpha);
        SolverOutput {
            w,
            alpha,
            primal_value,
            dual_value,
            duality_gap: primal_value - dual_value,
            picks_used: picks,
            clamp_events: clamps,
        }
    };

    if duality_gap(prob, &w, &alpha) <= cfg.gap_tolerance {
        return Ok(finish(w, alpha, 0, clamp_events));
    }

    let t_total = cfg.max_picks;
    let t0 = cfg.averaging_start_for();
    let check = cfg.check_interval.unwrap_or(n).max(1);
    let mut rng = rng_from_seed(cfg.seed);
    let mut w_sum = vec![0.0; p];
    let mut alpha_sum = vec![0.0; n];

    for t in 1..=t_total {
        if t > t0 {
            w_sum.iter_mut().zip(&w).for_each(|(s, v)| *s += v);
            alpha_sum.iter_mut().zip(&alpha).for_each(|(s, v)| *s += v);
        }
        let i = rng.random_range(0..n);
        let row = prob.x.row(i);
        let margin = dot(row, &w);
        let new = stepper.step(
            alpha[i],
            prob.targets[i],
            margin,
            curvature[i],
            &mut clamp_events,
        );
        let delta = new - alpha[i];
        if delta != 0.0 {
            alpha[i] = new;
            for ((wj, xij), sj) in w.iter_mut().zip(row).zip(&scale) {
                *wj += delta * xij * sj;
            }
        }
        if t % check == 0 && t < t_total && duality_gap(prob, &w, &alpha) <= cfg.gap_tolerance {
            return Ok(finish(w, alpha, t, clamp_events));
        }
    }

    let k = (t_total - t0) as f64;
    let w_bar: Vec<f64> = w_sum.into_iter().map(|s| s / k).collect();
    let alpha_bar: Vec<f64> = alpha_sum.into_iter().map(|s| s / k).collect();
    Ok(finish(w_bar, alpha_bar, t_total, clamp_events))
}
