//! Independent reference computations for the integration tests.
#![allow(dead_code)]

use emvs_core::numeric::{log_normal_cdf, rng_from_seed, sigmoid, softplus, LN_2PI};
use emvs_core::ssvs::beta_binomial_log_prior;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Damped Newton on (1/n) Σ softplus(−y xᵀw) + ½ Σ λ_j w_j².
pub fn newton_logistic(x: &DMatrix<f64>, y: &[f64], lambda: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    let objective = |w: &DVector<f64>| {
        let m = x * w;
        let loss: f64 = m.iter().zip(y).map(|(mi, yi)| softplus(-yi * mi)).sum();
        loss / n as f64 + 0.5 * w.iter().zip(lambda).map(|(wj, l)| l * wj * wj).sum::<f64>()
    };
    let mut w = DVector::zeros(p);
    for _ in 0..200 {
        let m = x * &w;
        let mut grad = DVector::from_fn(p, |j, _| lambda[j] * w[j]);
        let mut hess = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
        for i in 0..n {
            let s = sigmoid(-y[i] * m[i]);
            let xi = x.row(i).transpose();
            grad -= &xi * (y[i] * s / n as f64);
            hess += &xi * xi.transpose() * (s * (1.0 - s) / n as f64);
        }
        let step = hess.cholesky().expect("positive definite").solve(&grad);
        let f0 = objective(&w);
        let mut t = 1.0;
        while objective(&(&w - &step * t)) > f0 && t > 1e-12 {
            t *= 0.5;
        }
        w -= &step * t;
        if grad.amax() < 1e-15 {
            break;
        }
    }
    w.as_slice().to_vec()
}

/// Dense solve of (XᵀX/n + diag λ) w = Xᵀz/n.
pub fn dense_ridge(x: &DMatrix<f64>, z: &[f64], lambda: &[f64]) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut a = x.tr_mul(x) / n;
    for (j, l) in lambda.iter().enumerate() {
        a[(j, j)] += l;
    }
    let rhs = x.tr_mul(&DVector::from_column_slice(z)) / n;
    a.lu().solve(&rhs).expect("nonsingular").as_slice().to_vec()
}

/// log ∫ Π_i Φ(s_i x_iᵀβ) N(β; 0, ν₁ I) dβ over the columns in `cols`,
/// by a trapezoid rule in whitened coordinates around the Laplace mode.
/// `signs[i]` is +1 for y = 1 and −1 for y = 0.
pub fn probit_log_evidence(x: &DMatrix<f64>, signs: &[f64], cols: &[usize], nu1: f64) -> f64 {
    let k = cols.len();
    if k == 0 {
        return signs.len() as f64 * 0.5f64.ln();
    }
    let xs = x.select_columns(cols);
    let log_f = |b: &DVector<f64>| {
        let m = &xs * b;
        let ll: f64 = m.iter().zip(signs).map(|(mi, s)| log_normal_cdf(s * mi)).sum();
        ll - 0.5 * b.norm_squared() / nu1 - 0.5 * k as f64 * (LN_2PI + nu1.ln())
    };

    // Newton to the mode; the log-concave integrand has a unique maximum.
    let mut b = DVector::zeros(k);
    let mut hess = DMatrix::identity(k, k);
    for _ in 0..100 {
        let m = &xs * &b;
        let mut grad = -&b / nu1;
        hess = DMatrix::identity(k, k) / nu1;
        for i in 0..xs.nrows() {
            let t = signs[i] * m[i];
            // d/dt log Φ(t) = φ(t)/Φ(t) = λ(−t)
            let r = emvs_core::numeric::inverse_mills(-t);
            let xi = xs.row(i).transpose();
            grad += &xi * (signs[i] * r);
            hess += &xi * xi.transpose() * (r * (t + r));
        }
        let step = hess.clone().cholesky().expect("concave").solve(&grad);
        b += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }

    // β = mode + L u with L Lᵀ = H⁻¹
    let l = hess.cholesky().expect("concave").inverse().cholesky().unwrap().l();
    let log_det_l: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    let h = 0.05;
    let half = 240i64;
    let peak = log_f(&b);
    let mut acc = 0.0;
    let mut idx = vec![-half; k];
    loop {
        let u = DVector::from_iterator(k, idx.iter().map(|&i| i as f64 * h));
        acc += (log_f(&(&b + &l * u)) - peak).exp();
        let mut d = 0;
        while d < k {
            idx[d] += 1;
            if idx[d] <= half {
                break;
            }
            idx[d] = -half;
            d += 1;
        }
        if d == k {
            break;
        }
    }
    peak + acc.ln() + k as f64 * h.ln() + log_det_l
}

/// Posterior inclusion probabilities by enumerating every γ (small p only)
/// under the point-mass spike and the beta-binomial prior.
pub fn enumerate_inclusion(x: &DMatrix<f64>, y01: &[i32], nu1: f64, a: f64, b: f64) -> Vec<f64> {
    let p = x.ncols();
    assert!(p <= 4, "enumeration is exponential in p");
    let signs: Vec<f64> = y01.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let mut logs = Vec::new();
    for mask in 0..(1usize << p) {
        let cols: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        let lp = beta_binomial_log_prior(cols.len(), p, a, b) + probit_log_evidence(x, &signs, &cols, nu1);
        logs.push((mask, lp));
    }
    let max = logs.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|v| (v.1 - max).exp()).sum();
    (0..p)
        .map(|j| {
            logs.iter()
                .filter(|(mask, _)| mask >> j & 1 == 1)
                .map(|v| (v.1 - max).exp())
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Batch-means standard error of the mean of `series`, floored at the
/// binomial standard error under the reference proportion `p_ref`. The
/// floor keeps the error honest when a rare state is never visited and
/// the empirical spread collapses to zero.
pub fn batch_means_se(series: &[f64], batches: usize, p_ref: f64) -> f64 {
    let len = series.len();
    let size = len / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let bm = (var / batches as f64).sqrt();
    bm.max((p_ref * (1.0 - p_ref) / len as f64).sqrt())
}
