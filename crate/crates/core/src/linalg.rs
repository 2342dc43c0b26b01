//! Generalized ridge regression: β = (XᵀX + diag(d))⁻¹ Xᵀz.

use nalgebra::{DMatrix, DVector};

use crate::error::{EmvsError, Result};

/// Exact solver for `(XᵀX + diag(d)) β = Xᵀz` with varying `d` and `z`.
///
/// When p ≤ n the p × p system is factored directly (XᵀX is cached). When
/// p > n the equivalent n × n form `β = D⁻¹Xᵀ(I + X D⁻¹ Xᵀ)⁻¹ z` is used.
#[derive(Debug, Clone)]
pub struct GrrSolver {
    x: DMatrix<f64>,
    gram: Option<DMatrix<f64>>,
}

impl GrrSolver {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let gram = (x.ncols() <= x.nrows()).then(|| x.tr_mul(x));
        GrrSolver {
            x: x.clone(),
            gram,
        }
    }

    pub fn solve(&self, z: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        let (n, p) = self.x.shape();
        if z.len() != n {
            return Err(EmvsError::DimensionMismatch {
                expected: n,
                found: z.len(),
            });
        }
        if d.len() != p {
            return Err(EmvsError::DimensionMismatch {
                expected: p,
                found: d.len(),
            });
        }
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EmvsError::SingularSystem);
        }
        let z = DVector::from_column_slice(z);
        match &self.gram {
            Some(gram) => {
                let mut a = gram.clone();
                for (j, dj) in d.iter().enumerate() {
                    a[(j, j)] += dj;
                }
                let chol = a.cholesky().ok_or(EmvsError::SingularSystem)?;
                let beta = chol.solve(&self.x.tr_mul(&z));
                finite(beta.as_slice())
            }
            None => {
                let mut scaled = self.x.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col /= d[j].sqrt();
                }
                let mut m = &scaled * scaled.transpose();
                for i in 0..n {
                    m[(i, i)] += 1.0;
                }
                let chol = m.cholesky().ok_or(EmvsError::SingularSystem)?;
                let u = chol.solve(&z);
                let mut beta = self.x.tr_mul(&u);
                for (b, dj) in beta.iter_mut().zip(d) {
                    *b /= dj;
                }
                finite(beta.as_slice())
            }
        }
    }
}

fn finite(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v.to_vec())
    } else {
        Err(EmvsError::SingularSystem)
    }
}

/// One-shot generalized ridge solve.
pub fn grr_solve(x: &DMatrix<f64>, z: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    GrrSolver::new(x).solve(z, d)
}
