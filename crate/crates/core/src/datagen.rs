//! Synthetic correlated designs and binary responses.
//!
//! The design keeps `p_gamma` uniform "related" columns and builds every
//! other column from the orthogonal complement of their span, tilted back
//! toward it by a diagonal loading matrix T. With every diagonal entry of T
//! equal to λ = ρ/√(1 − ρ²), the inner-product correlation between any
//! related direction and any unrelated column is at most ρ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EmvsError, Result};
use crate::numeric::{derive_seed, rng_from_seed, sigmoid};
use crate::types::{Dataset, LabelCoding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub p_gamma: usize,
    /// Target maximal correlation, in [0, 1).
    pub rho: f64,
    pub seed: u64,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 || self.p_gamma == 0 {
            return Err(EmvsError::SpecInvalid(format!(
                "n >= 2, p >= 1 and p_gamma >= 1 required (n = {}, p = {}, p_gamma = {})",
                self.n, self.p, self.p_gamma
            )));
        }
        if self.p_gamma > self.p || self.p_gamma > self.n {
            return Err(EmvsError::SpecInvalid(format!(
                "p_gamma = {} exceeds min(n, p) = {}",
                self.p_gamma,
                self.n.min(self.p)
            )));
        }
        if self.p > self.p_gamma && self.p_gamma == self.n {
            return Err(EmvsError::SpecInvalid(
                "unrelated columns need p_gamma < n".into(),
            ));
        }
        if !(self.rho.is_finite() && (0.0..1.0).contains(&self.rho)) {
            return Err(EmvsError::SpecInvalid(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Link from the continuous response to label probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseLink {
    /// π = 1 / (1 + exp(−y)).
    LogisticTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub beta_true: Vec<f64>,
    /// Noise variance of the continuous response.
    pub sigma_eps2: f64,
    pub link: ResponseLink,
    pub coding: LabelCoding,
}

impl ResponseSpec {
    pub fn new(beta_true: Vec<f64>) -> Self {
        ResponseSpec {
            beta_true,
            sigma_eps2: 3.0,
            link: ResponseLink::LogisticTransform,
            coding: LabelCoding::PlusMinusOne,
        }
    }
}

/// λ with λ² = ρ² / (1 − ρ²).
pub fn loading_for_correlation(rho: f64) -> f64 {
    (rho * rho / (1.0 - rho * rho)).sqrt()
}

/// Orthonormal bases of the design geometry: `upsilon` spans the related
/// columns, `varrho` completes it to a basis of Rⁿ.
#[derive(Debug, Clone)]
pub struct DesignBasis {
    pub upsilon: DMatrix<f64>,
    pub varrho: DMatrix<f64>,
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
fn orthonormalize(m: &mut DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for _ in 0..2 {
            for k in 0..j {
                let r = m.column(k).dot(&m.column(j));
                let qk = m.column(k).clone_owned();
                m.column_mut(j).axpy(-r, &qk, 1.0);
            }
        }
        let norm = m.column(j).norm();
        if !(norm > 1e-10) {
            return Err(EmvsError::SpecInvalid(format!(
                "column {j} is numerically dependent on earlier columns"
            )));
        }
        m.column_mut(j).unscale_mut(norm);
    }
    Ok(())
}

/// Draws the design and also returns the bases used to build it.
pub fn generate_design_with_basis(spec: &DesignSpec) -> Result<(DMatrix<f64>, DesignBasis)> {
    spec.validate()?;
    let (n, p, pg) = (spec.n, spec.p, spec.p_gamma);
    let mut rng = rng_from_seed(spec.seed);

    // Only the first p_gamma columns of the uniform matrix are ever used.
    let related = DMatrix::from_fn(n, pg, |_, _| rng.random_range(-1.5..1.5));

    let mut q = DMatrix::zeros(n, n);
    q.columns_mut(0, pg).copy_from(&related);
    for j in pg..n {
        for i in 0..n {
            q[(i, j)] = rng.sample(StandardNormal);
        }
    }
    orthonormalize(&mut q)?;
    let basis = DesignBasis {
        upsilon: q.columns(0, pg).clone_owned(),
        varrho: q.columns(pg, n - pg).clone_owned(),
    };

    let lambda = loading_for_correlation(spec.rho);
    let scale = related.column_iter().map(|c| c.norm()).sum::<f64>() / pg as f64;
    let diag = pg.min(n - pg);

    let mut x = DMatrix::zeros(n, p);
    x.columns_mut(0, pg).copy_from(&related);
    for j in pg..p {
        let coef = DVector::from_fn(n - pg, |_, _| rng.random_range(-1.0..1.0));
        let tilt = DVector::from_fn(pg, |i, _| if i < diag { lambda * coef[i] } else { 0.0 });
        let mut col = &basis.varrho * &coef + &basis.upsilon * tilt;
        let norm = col.norm();
        col *= scale / norm;
        x.column_mut(j).copy_from(&col);
    }
    Ok((x, basis))
}

/// Raw (unstandardized) n × p design: related columns first.
pub fn generate_design(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    Ok(generate_design_with_basis(spec)?.0)
}

/// Label probabilities π_i for a noisy continuous response `Xβ + ε`.
pub fn response_probabilities<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    spec: &ResponseSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if spec.beta_true.len() != x.ncols() {
        return Err(EmvsError::DimensionMismatch {
            expected: x.ncols(),
            found: spec.beta_true.len(),
        });
    }
    if spec.beta_true.iter().any(|b| !b.is_finite()) {
        return Err(EmvsError::NonFinite);
    }
    if !(spec.sigma_eps2.is_finite() && spec.sigma_eps2 >= 0.0) {
        return Err(EmvsError::SpecInvalid(format!(
            "noise variance must be finite and >= 0, got {}",
            spec.sigma_eps2
        )));
    }
    let sd = spec.sigma_eps2.sqrt();
    let mean = x * DVector::from_column_slice(&spec.beta_true);
    Ok(mean
        .iter()
        .map(|&m| {
            let eps: f64 = rng.sample(StandardNormal);
            match spec.link {
                ResponseLink::LogisticTransform => sigmoid(m + sd * eps),
            }
        })
        .collect())
}

/// Binary labels from `Xβ + ε` through the logistic transform. `x` is passed
/// through unchanged; standardize afterwards if needed.
pub fn generate_binary_response(x: &DMatrix<f64>, spec: &ResponseSpec, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let probs = response_probabilities(x, spec, &mut rng)?;
    let (hi, lo) = match spec.coding {
        LabelCoding::PlusMinusOne => (1, -1),
        LabelCoding::ZeroOne => (1, 0),
    };
    let y = probs
        .iter()
        .map(|&pi| if rng.random::<f64>() < pi { hi } else { lo })
        .collect();
    Ok(Dataset {
        x: x.clone(),
        y,
        coding: spec.coding,
    })
}

/// First `p_gamma` entries i.i.d. U(−β_max, β_max), the rest zero.
pub fn generate_replicate_betas(p: usize, p_gamma: usize, beta_max: f64, seed: u64) -> Result<Vec<f64>> {
    if p_gamma > p {
        return Err(EmvsError::SpecInvalid(format!(
            "p_gamma = {p_gamma} exceeds p = {p}"
        )));
    }
    if !(beta_max.is_finite() && beta_max >= 0.0) {
        return Err(EmvsError::SpecInvalid(format!(
            "beta_max must be finite and >= 0, got {beta_max}"
        )));
    }
    let mut beta = vec![0.0; p];
    if beta_max > 0.0 {
        let mut rng = rng_from_seed(derive_seed(seed, 0xBE7A));
        for b in beta.iter_mut().take(p_gamma) {
            *b = rng.random_range(-beta_max..=beta_max);
        }
    }
    Ok(beta)
}

/// Largest |sample correlation| between a related and an unrelated column.
pub fn max_cross_correlation(x: &DMatrix<f64>, p_gamma: usize) -> f64 {
    let centered: Vec<DVector<f64>> = x
        .column_iter()
        .map(|c| {
            let mut v = c.clone_owned();
            let mean = v.mean();
            v.add_scalar_mut(-mean);
            let norm = v.norm();
            v / norm
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in &centered[..p_gamma] {
        for u in &centered[p_gamma..] {
            worst = worst.max(r.dot(u).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, p: usize, pg: usize, rho: f64, seed: u64) -> DesignSpec {
        DesignSpec {
            n,
            p,
            p_gamma: pg,
            rho,
            seed,
        }
    }

    #[test]
    fn loading_at_point_six() {
        assert_eq!(loading_for_correlation(0.6), 0.75);
        assert_eq!(loading_for_correlation(0.0), 0.0);
    }

    #[test]
    fn bases_are_orthonormal() {
        let (_, b) = generate_design_with_basis(&spec(40, 60, 5, 0.6, 3)).unwrap();
        let uu = b.upsilon.tr_mul(&b.upsilon);
        let rr = b.varrho.tr_mul(&b.varrho);
        let ur = b.upsilon.tr_mul(&b.varrho);
        assert!((uu - DMatrix::identity(5, 5)).amax() < 1e-10);
        assert!((rr - DMatrix::identity(35, 35)).amax() < 1e-10);
        assert!(ur.amax() < 1e-10);
    }

    #[test]
    fn zero_rho_gives_exactly_orthogonal_columns() {
        let x = generate_design(&spec(30, 50, 4, 0.0, 9)).unwrap();
        let cross = x.columns(0, 4).tr_mul(&x.columns(4, 46));
        assert!(cross.amax() < 1e-10);
    }

    #[test]
    fn inner_product_bound_holds_for_random_directions() {
        let rho = 0.6;
        let (_, b) = generate_design_with_basis(&spec(25, 30, 4, rho, 1)).unwrap();
        let lambda = loading_for_correlation(rho);
        let mut rng = rng_from_seed(2);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let y = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = DVector::from_fn(21, |_, _| rng.sample::<f64, _>(StandardNormal));
            let t = DVector::from_fn(4, |i, _| lambda * c[i]);
            let u = &b.upsilon * &y;
            let v = &b.varrho * &c + &b.upsilon * t;
            worst = worst.max(u.dot(&v).abs() / (u.norm() * v.norm()));
        }
        assert!(worst <= rho + 1e-12, "{worst}");
    }

    #[test]
    fn design_is_seed_deterministic() {
        let s = spec(20, 40, 3, 0.6, 77);
        assert_eq!(generate_design(&s).unwrap(), generate_design(&s).unwrap());
        assert_ne!(
            generate_design(&s).unwrap(),
            generate_design(&DesignSpec { seed: 78, ..s }).unwrap()
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for s in [
            spec(10, 20, 3, 1.0, 0),
            spec(10, 20, 3, -0.1, 0),
            spec(10, 20, 30, 0.5, 0),
            spec(10, 20, 10, 0.5, 0),
            spec(10, 5, 6, 0.5, 0),
        ] {
            assert!(matches!(generate_design(&s), Err(EmvsError::SpecInvalid(_))));
        }
    }

    #[test]
    fn null_response_is_a_fair_coin() {
        let x = DMatrix::from_fn(50, 3, |i, j| (i * j) as f64);
        let mut spec = ResponseSpec::new(vec![0.0; 3]);
        spec.sigma_eps2 = 0.0;
        let probs = response_probabilities(&x, &spec, &mut rng_from_seed(0)).unwrap();
        assert!(probs.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn saturated_response() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let mut spec = ResponseSpec::new(vec![20.0]);
        spec.sigma_eps2 = 0.0;
        let probs = response_probabilities(&x, &spec, &mut rng_from_seed(0)).unwrap();
        assert!(probs.iter().all(|&p| (1.0 - p) < 1e-8));
    }

    #[test]
    fn label_frequency_tracks_probabilities() {
        // 10⁵ labels at a fixed continuous response (no noise).
        let n = 100_000;
        let x = DMatrix::from_fn(n, 1, |i, _| ((i % 7) as f64 - 3.0) * 0.4);
        let mut spec = ResponseSpec::new(vec![1.0]);
        spec.sigma_eps2 = 0.0;
        spec.coding = LabelCoding::ZeroOne;
        let d = generate_binary_response(&x, &spec, 5).unwrap();
        let probs = response_probabilities(&x, &spec, &mut rng_from_seed(0)).unwrap();
        let mean_pi = probs.iter().sum::<f64>() / n as f64;
        let mean_y = d.y.iter().sum::<i32>() as f64 / n as f64;
        let se = (mean_pi * (1.0 - mean_pi) / n as f64).sqrt();
        assert!((mean_y - mean_pi).abs() < 3.0 * se);
    }

    #[test]
    fn replicate_betas() {
        assert_eq!(generate_replicate_betas(8, 3, 0.0, 1).unwrap(), vec![0.0; 8]);
        let b = generate_replicate_betas(8, 3, 2.0, 1).unwrap();
        assert!(b[..3].iter().all(|v| v.abs() <= 2.0 && *v != 0.0));
        assert!(b[3..].iter().all(|&v| v == 0.0));

        let draws: Vec<f64> = (0..10_000)
            .flat_map(|s| generate_replicate_betas(2, 1, 1.0, s).unwrap()[..1].to_vec())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // sd of U(−1, 1) is 1/√3
        assert!(mean.abs() < 3.0 / (3f64.sqrt() * 100.0));
    }
}
