//! Shared domain types: datasets and label codings, spike-and-slab
//! hyperparameters, EM iterates and fit results.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EmvsError, Result};

/// Label coding of a binary response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelCoding {
    /// Labels in {-1, +1}, used by the logistic engine.
    PlusMinusOne,
    /// Labels in {0, 1}, used by the probit engine.
    ZeroOne,
}

impl LabelCoding {
    pub fn accepts(self, label: i32) -> bool {
        match self {
            LabelCoding::PlusMinusOne => label == -1 || label == 1,
            LabelCoding::ZeroOne => label == 0 || label == 1,
        }
    }

    /// Detects the coding from a label vector. Returns `None` when the labels
    /// fit neither coding; an all-ones vector is reported as `ZeroOne`.
    pub fn detect(labels: &[i32]) -> Option<LabelCoding> {
        if labels.iter().all(|&l| LabelCoding::ZeroOne.accepts(l)) {
            Some(LabelCoding::ZeroOne)
        } else if labels.iter().all(|&l| LabelCoding::PlusMinusOne.accepts(l)) {
            Some(LabelCoding::PlusMinusOne)
        } else {
            None
        }
    }
}

/// Design matrix plus binary response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n × p predictors.
    pub x: DMatrix<f64>,
    /// Labels, length n.
    pub y: Vec<i32>,
    pub coding: LabelCoding,
}

impl Dataset {
    /// Builds a dataset and validates it.
    pub fn new(x: DMatrix<f64>, y: Vec<i32>, coding: LabelCoding) -> Result<Self> {
        validate_dataset(Dataset { x, y, coding })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Labels as ±1 reals regardless of the stored coding.
    pub fn signed_labels(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|&l| if l == 1 { 1.0 } else { -1.0 })
            .collect()
    }
}

/// Checks every dataset invariant and hands the dataset back untouched.
pub fn validate_dataset(d: Dataset) -> Result<Dataset> {
    if d.y.len() != d.x.nrows() {
        return Err(EmvsError::DimensionMismatch {
            expected: d.x.nrows(),
            found: d.y.len(),
        });
    }
    if d.x.nrows() < 2 || d.x.ncols() < 1 {
        return Err(EmvsError::TooSmall {
            n: d.x.nrows(),
            p: d.x.ncols(),
        });
    }
    if d.x.iter().any(|v| !v.is_finite()) {
        return Err(EmvsError::NonFinite);
    }
    let rows: Vec<usize> = d
        .y
        .iter()
        .enumerate()
        .filter(|(_, &l)| !d.coding.accepts(l))
        .map(|(i, _)| i)
        .collect();
    if !rows.is_empty() {
        return Err(EmvsError::LabelCodingMismatch { rows });
    }
    Ok(d)
}

/// Relabels -1 ↔ 0 and +1 ↔ 1. Identity when already in `target`.
pub fn recode(d: &Dataset, target: LabelCoding) -> Dataset {
    if d.coding == target {
        return d.clone();
    }
    let y = d
        .y
        .iter()
        .map(|&l| match (target, l) {
            (LabelCoding::ZeroOne, 1) | (LabelCoding::PlusMinusOne, 1) => 1,
            (LabelCoding::ZeroOne, _) => 0,
            (LabelCoding::PlusMinusOne, _) => -1,
        })
        .collect();
    Dataset {
        x: d.x.clone(),
        y,
        coding: target,
    }
}

/// Per-column means and standard deviations (n − 1 denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ColumnStats {
    pub fn from_matrix(x: &DMatrix<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EmvsError::NonFinite);
        }
        let n = x.nrows();
        if n < 2 {
            return Err(EmvsError::TooSmall { n, p: x.ncols() });
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            if sd == 0.0 || !sd.is_finite() {
                return Err(EmvsError::ConstantColumn(j));
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(ColumnStats { means, sds })
    }

    /// Centers and scales `x` with these statistics.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.means.len() {
            return Err(EmvsError::DimensionMismatch {
                expected: self.means.len(),
                found: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EmvsError::NonFinite);
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.sds[j]);
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

/// Centers every column to mean 0 and scales it to unit sample standard
/// deviation.
pub fn standardize(x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ColumnStats::from_matrix(x_raw)?.apply(x_raw)
}

/// Spike-and-slab prior configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabHyper {
    /// Spike variance scale.
    pub nu0: f64,
    /// Slab variance scale.
    pub nu1: f64,
    /// Beta prior on θ.
    pub a: f64,
    pub b: f64,
    /// Inverse-gamma prior on σ²: IG(ν/2, νλ/2).
    pub nu: f64,
    pub lambda: f64,
}

impl SpikeSlabHyper {
    pub fn new(nu0: f64, nu1: f64, a: f64, b: f64, nu: f64, lambda: f64) -> Result<Self> {
        let h = SpikeSlabHyper {
            nu0,
            nu1,
            a,
            b,
            nu,
            lambda,
        };
        h.validate()?;
        Ok(h)
    }

    /// Same hyperparameters with a different spike variance.
    pub fn with_nu0(self, nu0: f64) -> Result<Self> {
        let h = SpikeSlabHyper { nu0, ..self };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nu0", self.nu0),
            ("nu1", self.nu1),
            ("a", self.a),
            ("b", self.b),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmvsError::InvalidHyper(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.nu0 >= self.nu1 {
            return Err(EmvsError::InvalidHyper(format!(
                "need nu0 < nu1, got nu0 = {}, nu1 = {}",
                self.nu0, self.nu1
            )));
        }
        Ok(())
    }
}

/// One EM iterate together with the E-step quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub theta: f64,
    /// Inclusion probabilities.
    pub p_star: Vec<f64>,
    /// Expected prior precisions.
    pub d_star: Vec<f64>,
    pub iteration: usize,
}

impl EmState {
    /// Fresh state with E-step fields not yet computed (p* = θ, d* at that p*
    /// is filled in by the first E-step).
    pub fn initial(beta: Vec<f64>, sigma: f64, theta: f64) -> Self {
        let p = beta.len();
        EmState {
            beta,
            sigma,
            theta,
            p_star: vec![theta; p],
            d_star: vec![1.0; p],
            iteration: 0,
        }
    }
}

/// Outcome of one EM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub state: EmState,
    pub converged: bool,
    /// Observed-data log posterior (up to a constant), one entry per iterate
    /// starting from the initial one.
    pub objective_trace: Vec<f64>,
    /// `p_star > 0.5`.
    pub selected: Vec<bool>,
    /// Final duality gap of each iterative β-step (empty for exact solves).
    pub solver_gaps: Vec<f64>,
    pub wall_time: f64,
}

impl FitResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(j, _)| j)
            .collect()
    }
}

pub(crate) fn selection_from(p_star: &[f64]) -> Vec<bool> {
    p_star.iter().map(|&p| p > 0.5).collect()
}
