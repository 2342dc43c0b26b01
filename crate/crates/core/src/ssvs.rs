//! Stochastic search variable selection for probit regression.
//!
//! Gibbs sampler over latent responses z, inclusion vector γ and β. γ moves
//! by single-coordinate Metropolis flips against the marginal likelihood of z
//! with β integrated out, under a beta-binomial prior on γ. With ν₀ = 0 the
//! spike is a point mass: excluded columns are dropped from the model.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EmvsError, Result};
use crate::numeric::{rng_from_seed, sample_truncated_excess, SeededRng, LN_2PI};
use crate::types::{recode, Dataset, LabelCoding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsConfig {
    /// Slab variance.
    pub nu1: f64,
    /// Spike variance; 0 is a point mass.
    pub nu0: f64,
    pub a: f64,
    pub b: f64,
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub metropolis_steps_per_sweep: usize,
    pub seed: u64,
    /// Optional wall-clock cap; the chain stops after the sweep that crosses it.
    pub time_budget: Option<Duration>,
}

impl Default for SsvsConfig {
    fn default() -> Self {
        SsvsConfig {
            nu1: 1000.0,
            nu0: 0.0,
            a: 1.0,
            b: 1.0,
            iterations: 2000,
            burn_in: 500,
            metropolis_steps_per_sweep: 1000,
            seed: 0,
            time_budget: None,
        }
    }
}

impl SsvsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EmvsError::InvalidConfig(m));
        if !(self.nu1.is_finite() && self.nu1 > 0.0) {
            return bad(format!("nu1 must be positive, got {}", self.nu1));
        }
        if !(self.nu0.is_finite() && self.nu0 >= 0.0 && self.nu0 < self.nu1) {
            return bad(format!("nu0 must lie in [0, nu1), got {}", self.nu0));
        }
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return bad(format!("a and b must be positive, got {}, {}", self.a, self.b));
        }
        if self.metropolis_steps_per_sweep == 0 {
            return bad("metropolis_steps_per_sweep must be positive".into());
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvsResult {
    /// Post-burn-in inclusion frequency per coordinate; all zero when no
    /// sweep was kept.
    pub gamma_inclusion_freq: Vec<f64>,
    /// Accepted / proposed over all sweeps (0 when nothing was proposed).
    pub acceptance_rate: f64,
    /// Sweeps completed.
    pub sweeps: usize,
    /// Sweeps discarded before accumulating frequencies.
    pub burn_in_used: usize,
    pub selected: Vec<bool>,
    pub accepted_per_sweep: Vec<usize>,
    pub proposals_per_sweep: usize,
    /// Set when the active set ever grew beyond n.
    pub active_set_overflow: bool,
    /// Active set of every kept sweep; only filled when requested.
    pub trace: Vec<Vec<u32>>,
    pub wall_time: f64,
}

impl SsvsResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(j, &s)| s.then_some(j))
            .collect()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// log π(γ) with θ ~ Beta(a, b) integrated out, for |γ| = k of p.
pub fn beta_binomial_log_prior(k: usize, p: usize, a: f64, b: f64) -> f64 {
    ln_beta(a + k as f64, b + (p - k) as f64) - ln_beta(a, b)
}

fn active_columns(x: &DMatrix<f64>, active: &[usize]) -> DMatrix<f64> {
    x.select_columns(active)
}

/// log N(z; 0, I + ν₁ X_γ X_γᵀ) for the point-mass spike.
///
/// With k active columns, the k × k form
/// `−½ n log 2π − ½ log det G − ½ (zᵀz − ν₁ bᵀ G⁻¹ b)`, `G = I + ν₁ X_γᵀX_γ`,
/// `b = X_γᵀz`, is used when k ≤ n; otherwise the n × n covariance is
/// factored directly.
pub fn marginal_log_likelihood(x: &DMatrix<f64>, z: &[f64], gamma: &[bool], nu1: f64) -> Result<f64> {
    if z.len() != x.nrows() {
        return Err(EmvsError::DimensionMismatch {
            expected: x.nrows(),
            found: z.len(),
        });
    }
    if gamma.len() != x.ncols() {
        return Err(EmvsError::DimensionMismatch {
            expected: x.ncols(),
            found: gamma.len(),
        });
    }
    let active: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j]).collect();
    let z = DVector::from_column_slice(z);
    let xg = active_columns(x, &active);
    marginal_point_mass(&xg, &z, nu1).ok_or(EmvsError::SingularSystem)
}

fn marginal_point_mass(xg: &DMatrix<f64>, z: &DVector<f64>, nu1: f64) -> Option<f64> {
    let (n, k) = xg.shape();
    let base = -0.5 * n as f64 * LN_2PI;
    let zz = z.norm_squared();
    if k == 0 {
        return Some(base - 0.5 * zz);
    }
    if k <= n {
        let mut g = xg.tr_mul(xg) * nu1;
        for i in 0..k {
            g[(i, i)] += 1.0;
        }
        let chol = g.cholesky()?;
        let b = xg.tr_mul(z);
        let quad = zz - nu1 * b.dot(&chol.solve(&b));
        Some(base - log_det_chol(&chol.l()) - 0.5 * quad)
    } else {
        let mut cov = xg * xg.transpose() * nu1;
        for i in 0..n {
            cov[(i, i)] += 1.0;
        }
        dense_normal_log_density(cov, z)
    }
}

/// ½ log det of `L Lᵀ`.
fn log_det_chol(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|v| v.ln()).sum()
}

fn dense_normal_log_density(cov: DMatrix<f64>, z: &DVector<f64>) -> Option<f64> {
    let n = z.len();
    let chol = cov.cholesky()?;
    let quad = z.dot(&chol.solve(z));
    Some(-0.5 * n as f64 * LN_2PI - log_det_chol(&chol.l()) - 0.5 * quad)
}

/// log N(z; 0, I + X V Xᵀ) with V = diag(ν₁ on γ, ν₀ off γ); used when the
/// spike has positive variance.
fn marginal_continuous_spike(x: &DMatrix<f64>, z: &DVector<f64>, gamma: &[bool], nu0: f64, nu1: f64) -> Option<f64> {
    let mut scaled = x.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= if gamma[j] { nu1 } else { nu0 }.sqrt();
    }
    let mut cov = &scaled * scaled.transpose();
    for i in 0..x.nrows() {
        cov[(i, i)] += 1.0;
    }
    dense_normal_log_density(cov, z)
}

struct Chain<'a> {
    x: &'a DMatrix<f64>,
    cfg: &'a SsvsConfig,
    gamma: Vec<bool>,
    beta: Vec<f64>,
    overflow: bool,
}

impl Chain<'_> {
    fn active(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&j| self.gamma[j]).collect()
    }

    fn log_marginal(&mut self, z: &DVector<f64>) -> f64 {
        let value = if self.cfg.nu0 == 0.0 {
            let active = self.active();
            if active.len() > self.x.nrows() {
                self.overflow = true;
            }
            marginal_point_mass(&active_columns(self.x, &active), z, self.cfg.nu1)
        } else {
            marginal_continuous_spike(self.x, z, &self.gamma, self.cfg.nu0, self.cfg.nu1)
        };
        value.unwrap_or(f64::NEG_INFINITY)
    }

    fn log_prior(&self) -> f64 {
        let k = self.gamma.iter().filter(|&&g| g).count();
        beta_binomial_log_prior(k, self.gamma.len(), self.cfg.a, self.cfg.b)
    }

    fn sample_latent(&self, y: &[i32], rng: &mut SeededRng) -> DVector<f64> {
        let m = self.x * DVector::from_column_slice(&self.beta);
        DVector::from_iterator(
            y.len(),
            m.iter().zip(y).map(|(&mi, &yi)| {
                if yi == 1 {
                    sample_truncated_excess(-mi, rng)
                } else {
                    -sample_truncated_excess(mi, rng)
                }
            }),
        )
    }

    fn metropolis(&mut self, z: &DVector<f64>, steps: usize, rng: &mut SeededRng) -> usize {
        let p = self.gamma.len();
        let mut current = self.log_marginal(z) + self.log_prior();
        let mut accepted = 0;
        for _ in 0..steps {
            let j = rng.random_range(0..p);
            self.gamma[j] = !self.gamma[j];
            let proposed = self.log_marginal(z) + self.log_prior();
            let u: f64 = rng.random();
            if u.ln() < proposed - current {
                current = proposed;
                accepted += 1;
            } else {
                self.gamma[j] = !self.gamma[j];
            }
        }
        accepted
    }

    fn sample_beta(&mut self, z: &DVector<f64>, rng: &mut SeededRng) -> Result<()> {
        if self.cfg.nu0 == 0.0 {
            self.sample_beta_point_mass(z, rng)
        } else {
            self.sample_beta_full(z, rng)
        }
    }

    /// β_γ ~ N(A⁻¹X_γᵀz, A⁻¹), A = X_γᵀX_γ + I/ν₁; zero off γ.
    fn sample_beta_point_mass(&mut self, z: &DVector<f64>, rng: &mut SeededRng) -> Result<()> {
        self.beta.iter_mut().for_each(|b| *b = 0.0);
        let active = self.active();
        if active.is_empty() {
            return Ok(());
        }
        let xg = active_columns(self.x, &active);
        let k = active.len();
        let mut a = xg.tr_mul(&xg);
        for i in 0..k {
            a[(i, i)] += 1.0 / self.cfg.nu1;
        }
        let chol = a.cholesky().ok_or(EmvsError::SingularSystem)?;
        let mean = chol.solve(&xg.tr_mul(z));
        let eps = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        // L⁻ᵀ ε has covariance A⁻¹
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&eps)
            .ok_or(EmvsError::SingularSystem)?;
        for (i, &j) in active.iter().enumerate() {
            self.beta[j] = mean[i] + noise[i];
        }
        Ok(())
    }

    /// Exact draw from N((XᵀX + V⁻¹)⁻¹Xᵀz, (XᵀX + V⁻¹)⁻¹) through the n × n
    /// system: u ~ N(0, V), δ ~ N(0, I), β = u + VXᵀ(XVXᵀ + I)⁻¹(z − Xu − δ).
    fn sample_beta_full(&mut self, z: &DVector<f64>, rng: &mut SeededRng) -> Result<()> {
        let (n, p) = self.x.shape();
        let v: Vec<f64> = self
            .gamma
            .iter()
            .map(|&g| if g { self.cfg.nu1 } else { self.cfg.nu0 })
            .collect();
        let u = DVector::from_fn(p, |j, _| v[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
        let delta = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut scaled = self.x.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= v[j].sqrt();
        }
        let mut m = &scaled * scaled.transpose();
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let chol = m.cholesky().ok_or(EmvsError::SingularSystem)?;
        let w = chol.solve(&(z - self.x * &u - delta));
        let xtw = self.x.tr_mul(&w);
        for j in 0..p {
            self.beta[j] = u[j] + v[j] * xtw[j];
        }
        Ok(())
    }
}

/// Runs the sampler. Labels in {−1, 1} are recoded to 0/1 first.
pub fn run_ssvs_probit(d: &Dataset, cfg: &SsvsConfig) -> Result<SsvsResult> {
    run_ssvs_probit_traced(d, cfg, false)
}

/// As [`run_ssvs_probit`], optionally keeping the post-burn-in γ trace.
pub fn run_ssvs_probit_traced(d: &Dataset, cfg: &SsvsConfig, keep_trace: bool) -> Result<SsvsResult> {
    let start = Instant::now();
    cfg.validate()?;
    let d = if d.coding == LabelCoding::ZeroOne {
        d.clone()
    } else {
        recode(d, LabelCoding::ZeroOne)
    };
    let p = d.p();
    let mut rng = rng_from_seed(cfg.seed);
    let mut chain = Chain {
        x: &d.x,
        cfg,
        gamma: vec![false; p],
        beta: vec![0.0; p],
        overflow: false,
    };

    // Sparse record of each sweep's active set, reduced after the run so the
    // burn-in can shrink when a time budget cuts the chain short.
    let mut history: Vec<Vec<u32>> = Vec::new();
    let mut accepted_per_sweep = Vec::new();
    for _ in 0..cfg.iterations {
        if let Some(budget) = cfg.time_budget {
            if start.elapsed() >= budget {
                break;
            }
        }
        let z = chain.sample_latent(&d.y, &mut rng);
        accepted_per_sweep.push(chain.metropolis(&z, cfg.metropolis_steps_per_sweep, &mut rng));
        chain.sample_beta(&z, &mut rng)?;
        history.push(chain.active().iter().map(|&j| j as u32).collect());
    }

    let sweeps = history.len();
    let burn_in_used = if sweeps == cfg.iterations {
        cfg.burn_in
    } else {
        cfg.burn_in.min(sweeps / 2)
    };
    let kept = &history[burn_in_used..];
    let mut freq = vec![0.0; p];
    for active in kept {
        for &j in active {
            freq[j as usize] += 1.0;
        }
    }
    if !kept.is_empty() {
        freq.iter_mut().for_each(|f| *f /= kept.len() as f64);
    }
    let proposed = sweeps * cfg.metropolis_steps_per_sweep;
    let accepted: usize = accepted_per_sweep.iter().sum();
    Ok(SsvsResult {
        selected: freq.iter().map(|&f| f > 0.5).collect(),
        gamma_inclusion_freq: freq,
        acceptance_rate: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
        sweeps,
        burn_in_used,
        accepted_per_sweep,
        proposals_per_sweep: cfg.metropolis_steps_per_sweep,
        active_set_overflow: chain.overflow,
        trace: if keep_trace { kept.to_vec() } else { Vec::new() },
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_binary_response, ResponseSpec};

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn dense_oracle(x: &DMatrix<f64>, z: &[f64], gamma: &[bool], nu1: f64) -> f64 {
        let v: Vec<f64> = gamma.iter().map(|&g| if g { nu1 } else { 0.0 }).collect();
        let cov = x * DMatrix::from_diagonal(&DVector::from_vec(v)) * x.transpose()
            + DMatrix::identity(x.nrows(), x.nrows());
        dense_normal_log_density(cov, &DVector::from_column_slice(z)).unwrap()
    }

    #[test]
    fn empty_model_marginal() {
        let x = random_matrix(6, 3, 1);
        let z = [0.3, -1.0, 2.0, 0.0, 0.5, -0.2];
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let got = marginal_log_likelihood(&x, &z, &[false; 3], 1000.0).unwrap();
        assert!((got - (-3.0 * LN_2PI - 0.5 * zz)).abs() < 1e-12);
    }

    #[test]
    fn rank_one_marginal_identity() {
        let n = 5;
        let u: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x = DMatrix::from_iterator(n, 1, u.iter().map(|v| v / norm));
        let z = [1.0, -0.5, 0.25, 2.0, -1.5];
        let nu1: f64 = 7.0;
        let uz: f64 = x.column(0).iter().zip(&z).map(|(a, b)| a * b).sum();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let expected = -0.5 * n as f64 * LN_2PI
            - 0.5 * (1.0 + nu1).ln()
            - 0.5 * (zz - uz * uz * nu1 / (1.0 + nu1));
        let got = marginal_log_likelihood(&x, &z, &[true], nu1).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn marginal_forms_agree_with_dense_covariance() {
        let z: Vec<f64> = (0..6).map(|i| (i as f64).cos()).collect();
        // k < n, then k > n
        for &(p, ref gamma) in &[
            (4, vec![true, false, true, true]),
            (9, vec![true; 9]),
        ] {
            let x = random_matrix(6, p, p as u64);
            let got = marginal_log_likelihood(&x, &z, gamma, 3.0).unwrap();
            let want = dense_oracle(&x, &z, gamma, 3.0);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn duplicate_column_changes_marginal() {
        let base = random_matrix(8, 2, 4);
        let x = DMatrix::from_fn(8, 3, |i, j| base[(i, j.min(1))]);
        let z: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let single = marginal_log_likelihood(&x, &z, &[true, true, false], 10.0).unwrap();
        let dup = marginal_log_likelihood(&x, &z, &[true, true, true], 10.0).unwrap();
        assert!((single - dup).abs() > 1e-6);
        assert!((dup - dense_oracle(&x, &z, &[true, true, true], 10.0)).abs() < 1e-8);
    }

    #[test]
    fn beta_binomial_uniform_prior() {
        // a = b = 1: π(γ) = 1 / ((p + 1) C(p, k))
        let got = beta_binomial_log_prior(1, 3, 1.0, 1.0);
        assert!((got - (1.0f64 / 12.0).ln()).abs() < 1e-12);
        let total: f64 = (0..=3)
            .map(|k| [1.0, 3.0, 3.0, 1.0][k] * beta_binomial_log_prior(k, 3, 1.0, 1.0).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn toy() -> Dataset {
        let x = random_matrix(50, 2, 21);
        let mut spec = ResponseSpec::new(vec![3.0, 0.0]);
        spec.coding = LabelCoding::ZeroOne;
        spec.sigma_eps2 = 0.0;
        generate_binary_response(&x, &spec, 22).unwrap()
    }

    #[test]
    fn strong_signal_toy() {
        let cfg = SsvsConfig {
            iterations: 2500,
            burn_in: 500,
            metropolis_steps_per_sweep: 4,
            seed: 3,
            ..SsvsConfig::default()
        };
        let r = run_ssvs_probit(&toy(), &cfg).unwrap();
        assert!(r.gamma_inclusion_freq[0] > 0.9, "{:?}", r.gamma_inclusion_freq);
        assert!(r.gamma_inclusion_freq[1] < 0.2, "{:?}", r.gamma_inclusion_freq);
        assert_eq!(r.selected, vec![true, false]);
    }

    #[test]
    fn acceptance_bookkeeping_and_determinism() {
        let cfg = SsvsConfig {
            iterations: 60,
            burn_in: 10,
            metropolis_steps_per_sweep: 7,
            seed: 9,
            ..SsvsConfig::default()
        };
        let r = run_ssvs_probit(&toy(), &cfg).unwrap();
        let accepted: usize = r.accepted_per_sweep.iter().sum();
        assert_eq!(r.acceptance_rate, accepted as f64 / (60.0 * 7.0));
        assert!((0.0..=1.0).contains(&r.acceptance_rate));
        assert!(r.accepted_per_sweep.iter().all(|&a| a <= 7));
        assert_eq!(r, SsvsResult { wall_time: r.wall_time, ..run_ssvs_probit(&toy(), &cfg).unwrap() }.clone());
    }

    #[test]
    fn zero_sweeps_is_an_empty_record() {
        let cfg = SsvsConfig {
            iterations: 0,
            burn_in: 0,
            ..SsvsConfig::default()
        };
        let r = run_ssvs_probit(&toy(), &cfg).unwrap();
        assert_eq!(r.sweeps, 0);
        assert_eq!(r.gamma_inclusion_freq, vec![0.0, 0.0]);
        assert_eq!(r.acceptance_rate, 0.0);
    }

    #[test]
    fn point_mass_zeros_excluded_coefficients() {
        let d = toy();
        let cfg = SsvsConfig::default();
        let mut chain = Chain {
            x: &d.x,
            cfg: &cfg,
            gamma: vec![true, false],
            beta: vec![5.0, 5.0],
            overflow: false,
        };
        let mut rng = rng_from_seed(0);
        for _ in 0..20 {
            let z = chain.sample_latent(&d.y, &mut rng);
            for (zi, yi) in z.iter().zip(&d.y) {
                assert_eq!(*zi > 0.0, *yi == 1);
            }
            chain.metropolis(&z, 2, &mut rng);
            chain.sample_beta(&z, &mut rng).unwrap();
            for j in 0..2 {
                if !chain.gamma[j] {
                    assert_eq!(chain.beta[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn continuous_spike_runs() {
        let cfg = SsvsConfig {
            nu0: 0.01,
            iterations: 50,
            burn_in: 10,
            metropolis_steps_per_sweep: 2,
            ..SsvsConfig::default()
        };
        let r = run_ssvs_probit(&toy(), &cfg).unwrap();
        assert!(r.gamma_inclusion_freq[0] > 0.5);
    }

    #[test]
    fn config_validation() {
        let bad = [
            SsvsConfig { burn_in: 10, iterations: 10, ..SsvsConfig::default() },
            SsvsConfig { nu1: 0.0, ..SsvsConfig::default() },
            SsvsConfig { nu0: -1.0, ..SsvsConfig::default() },
            SsvsConfig { metropolis_steps_per_sweep: 0, ..SsvsConfig::default() },
            SsvsConfig { a: 0.0, ..SsvsConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
