//! Regularization paths over ν₀, selection metrics, the replicated
//! simulation study and the budget-matched SSVS comparison.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_binary_response, generate_design, generate_replicate_betas, DesignSpec, ResponseSpec};
use crate::error::{EmvsError, Result};
use crate::logistic::{fit_logistic, LogisticEmConfig};
use crate::numeric::derive_seed;
use crate::probit::{fit_probit, ProbitEmConfig};
use crate::ssvs::{run_ssvs_probit, SsvsConfig, SsvsResult};
use crate::types::{standardize, Dataset, FitResult, LabelCoding, SpikeSlabHyper};

/// Strictly increasing positive ν₀ values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nu0Grid {
    values: Vec<f64>,
}

impl Nu0Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EmvsError::InvalidConfig("empty nu0 grid".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EmvsError::InvalidConfig("nu0 grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EmvsError::InvalidConfig("nu0 grid must be strictly increasing".into()));
        }
        Ok(Nu0Grid { values })
    }

    /// `count` points `start, start + step, …`, rounded to 12 decimals so
    /// that grid values print cleanly.
    pub fn arithmetic(start: f64, step: f64, count: usize) -> Result<Self> {
        Nu0Grid::new(
            (0..count)
                .map(|k| ((start + step * k as f64) * 1e12).round() / 1e12)
                .collect(),
        )
    }

    /// 1.02, 1.04, …, 2.00.
    pub fn logistic_default() -> Self {
        Nu0Grid::arithmetic(1.02, 0.02, 50).expect("valid default grid")
    }

    /// 0.0002, 0.0004, …, 0.01.
    pub fn probit_default() -> Self {
        Nu0Grid::arithmetic(0.0002, 0.0002, 50).expect("valid default grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks every value against the slab variance.
    pub fn validate_against(&self, nu1: f64) -> Result<()> {
        match self.values.last() {
            Some(&v) if v >= nu1 => Err(EmvsError::InvalidConfig(format!(
                "nu0 grid value {v} is not below nu1 = {nu1}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Logistic,
    Probit,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Logistic => "logistic",
            Model::Probit => "probit",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully configured engine; ν₀ is overridden per grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Logistic(LogisticEmConfig),
    Probit(ProbitEmConfig),
}

impl ModelConfig {
    pub fn model(&self) -> Model {
        match self {
            ModelConfig::Logistic(_) => Model::Logistic,
            ModelConfig::Probit(_) => Model::Probit,
        }
    }

    pub fn hyper(&self) -> &SpikeSlabHyper {
        match self {
            ModelConfig::Logistic(c) => &c.hyper,
            ModelConfig::Probit(c) => &c.hyper,
        }
    }

    pub fn with_nu0(&self, nu0: f64) -> Result<Self> {
        Ok(match self {
            ModelConfig::Logistic(c) => ModelConfig::Logistic(LogisticEmConfig {
                hyper: c.hyper.clone().with_nu0(nu0)?,
                ..c.clone()
            }),
            ModelConfig::Probit(c) => ModelConfig::Probit(ProbitEmConfig {
                hyper: c.hyper.clone().with_nu0(nu0)?,
                ..c.clone()
            }),
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            ModelConfig::Logistic(c) => c.sdca.seed = seed,
            ModelConfig::Probit(c) => c.sdca.seed = seed,
        }
        out
    }

    /// Default engine for `p` predictors: ν₁ = 1000 (logistic) or 100
    /// (probit), a = 1, b = p, ν = 1, λ = 0.001, θ⁰ = 0.5, σ⁰ = 1.
    pub fn paper_default(model: Model, p: usize, nu0: f64) -> Result<Self> {
        Ok(match model {
            Model::Logistic => ModelConfig::Logistic(LogisticEmConfig::new(SpikeSlabHyper::new(
                nu0, 1000.0, 1.0, p as f64, 1.0, 0.001,
            )?)),
            Model::Probit => ModelConfig::Probit(ProbitEmConfig::new(SpikeSlabHyper::new(
                nu0, 100.0, 1.0, p as f64, 1.0, 0.001,
            )?)),
        })
    }

    pub fn fit(&self, d: &Dataset) -> Result<FitResult> {
        match self {
            ModelConfig::Logistic(c) => fit_logistic(d, c),
            ModelConfig::Probit(c) => fit_probit(d, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub nu0: f64,
    pub fit: Result<FitResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub model: Model,
    pub points: Vec<PathPoint>,
}

impl PathResult {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// β per grid point (`None` for failed points).
    pub fn betas(&self) -> Vec<Option<&[f64]>> {
        self.points
            .iter()
            .map(|pt| pt.fit.as_ref().ok().map(|f| f.state.beta.as_slice()))
            .collect()
    }

    pub fn p_stars(&self) -> Vec<Option<&[f64]>> {
        self.points
            .iter()
            .map(|pt| pt.fit.as_ref().ok().map(|f| f.state.p_star.as_slice()))
            .collect()
    }

    pub fn total_wall_time(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|pt| pt.fit.as_ref().ok())
            .map(|f| f.wall_time)
            .sum()
    }
}

/// Fits every grid point independently from a fresh start, in parallel on
/// the current rayon pool. Failed points are kept as errors.
pub fn run_path(d: &Dataset, grid: &Nu0Grid, cfg: &ModelConfig) -> Result<PathResult> {
    grid.validate_against(cfg.hyper().nu1)?;
    let points = grid
        .values()
        .par_iter()
        .map(|&nu0| PathPoint {
            nu0,
            fit: cfg.with_nu0(nu0).and_then(|c| c.fit(d)),
        })
        .collect();
    Ok(PathResult {
        model: cfg.model(),
        points,
    })
}

/// TPR, TNR, PPV and NPV; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

impl SelectionMetrics {
    /// One character per metric (TPR, TNR, PPV, NPV): '1' defined, '0' not.
    pub fn defined_flags(&self) -> String {
        [self.tpr, self.tnr, self.ppv, self.npv]
            .iter()
            .map(|m| if m.is_some() { '1' } else { '0' })
            .collect()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn selection_metrics(selected: &[bool], truth: &[bool]) -> Result<SelectionMetrics> {
    if selected.len() != truth.len() {
        return Err(EmvsError::DimensionMismatch {
            expected: truth.len(),
            found: selected.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &t) in selected.iter().zip(truth) {
        match (s, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(SelectionMetrics {
        tp,
        fp,
        tn,
        fn_,
        tpr: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyModel {
    Logistic,
    Probit,
    Both,
}

impl StudyModel {
    pub fn models(self) -> Vec<Model> {
        match self {
            StudyModel::Logistic => vec![Model::Logistic],
            StudyModel::Probit => vec![Model::Probit],
            StudyModel::Both => vec![Model::Logistic, Model::Probit],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n: usize,
    pub p: usize,
    pub p_gamma: usize,
    pub rho: f64,
    pub sigma_eps2: f64,
    pub beta_max: f64,
    pub replicates: usize,
    pub logistic_grid: Nu0Grid,
    pub probit_grid: Nu0Grid,
    pub model: StudyModel,
    pub base_seed: u64,
    /// 0 uses rayon's default pool.
    pub worker_count: usize,
    /// Optional engine templates; defaults follow [`ModelConfig::paper_default`].
    pub logistic: Option<LogisticEmConfig>,
    pub probit: Option<ProbitEmConfig>,
}

impl StudyConfig {
    pub fn new(beta_max: f64, replicates: usize) -> Self {
        StudyConfig {
            n: 100,
            p: 1000,
            p_gamma: 10,
            rho: 0.6,
            sigma_eps2: 3.0,
            beta_max,
            replicates,
            logistic_grid: Nu0Grid::logistic_default(),
            probit_grid: Nu0Grid::probit_default(),
            model: StudyModel::Both,
            base_seed: 0,
            worker_count: 0,
            logistic: None,
            probit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(EmvsError::InvalidConfig("replicates must be >= 1".into()));
        }
        if !(self.beta_max.is_finite() && self.beta_max >= 0.0) {
            return Err(EmvsError::InvalidConfig(format!(
                "beta_max must be finite and >= 0, got {}",
                self.beta_max
            )));
        }
        if !(self.sigma_eps2.is_finite() && self.sigma_eps2 >= 0.0) {
            return Err(EmvsError::InvalidConfig(format!(
                "sigma_eps2 must be finite and >= 0, got {}",
                self.sigma_eps2
            )));
        }
        self.design_spec(0).validate()?;
        for model in self.model.models() {
            self.grid(model).validate_against(self.engine(model)?.hyper().nu1)?;
        }
        Ok(())
    }

    pub fn grid(&self, model: Model) -> &Nu0Grid {
        match model {
            Model::Logistic => &self.logistic_grid,
            Model::Probit => &self.probit_grid,
        }
    }

    fn design_spec(&self, seed: u64) -> DesignSpec {
        DesignSpec {
            n: self.n,
            p: self.p,
            p_gamma: self.p_gamma,
            rho: self.rho,
            seed,
        }
    }

    /// Engine template for `model` (ν₀ is a placeholder until a grid point
    /// overrides it).
    pub fn engine(&self, model: Model) -> Result<ModelConfig> {
        let first = self.grid(model).values()[0];
        match model {
            Model::Logistic => match &self.logistic {
                Some(c) => Ok(ModelConfig::Logistic(c.clone())),
                None => ModelConfig::paper_default(model, self.p, first),
            },
            Model::Probit => match &self.probit {
                Some(c) => Ok(ModelConfig::Probit(c.clone())),
                None => ModelConfig::paper_default(model, self.p, first),
            },
        }
    }
}

/// Seed of replicate `r`: a stable hash of (base seed, r).
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    derive_seed(base_seed, replicate as u64)
}

/// Standardized dataset (±1 labels) from a generated design and a fixed β:
/// the design uses `derive_seed(seed, 1)`, the response `derive_seed(seed, 3)`.
/// The response is drawn from the raw design, which is standardized after.
pub fn simulate_dataset(
    design: &DesignSpec,
    beta: &[f64],
    sigma_eps2: f64,
    seed: u64,
) -> Result<Dataset> {
    let x = generate_design(&DesignSpec {
        seed: derive_seed(seed, 1),
        ..design.clone()
    })?;
    let spec = ResponseSpec {
        sigma_eps2,
        coding: LabelCoding::PlusMinusOne,
        ..ResponseSpec::new(beta.to_vec())
    };
    let d = generate_binary_response(&x, &spec, derive_seed(seed, 3))?;
    Ok(Dataset {
        x: standardize(&d.x)?,
        ..d
    })
}

/// One replicate's standardized dataset (±1 labels) and true β.
pub fn replicate_data(cfg: &StudyConfig, replicate: usize) -> Result<(Dataset, Vec<f64>)> {
    let seed = replicate_seed(cfg.base_seed, replicate);
    let beta = generate_replicate_betas(cfg.p, cfg.p_gamma, cfg.beta_max, derive_seed(seed, 2))?;
    let d = simulate_dataset(&cfg.design_spec(0), &beta, cfg.sigma_eps2, seed)?;
    Ok((d, beta))
}

/// One row of the tidy study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub replicate: usize,
    pub model: Model,
    pub nu0: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub defined_flags: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub replicate: usize,
    pub model: Option<Model>,
    pub nu0: Option<f64>,
    pub message: String,
}

/// Mean, Monte-Carlo standard error and number of defined entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub count: usize,
}

impl MeanSe {
    /// Sorts before summing so the result does not depend on input order.
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut v: Vec<f64> = values.into_iter().flatten().collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        if count == 0 {
            return MeanSe {
                mean: None,
                se: None,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let se = (count > 1).then(|| {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        });
        MeanSe {
            mean: Some(mean),
            se,
            count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub model: Model,
    pub nu0: f64,
    pub tpr: MeanSe,
    pub tnr: MeanSe,
    pub ppv: MeanSe,
    pub npv: MeanSe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    /// Sorted by (replicate, model, ν₀).
    pub rows: Vec<StudyRow>,
    pub failures: Vec<StudyFailure>,
    pub summary: Vec<GridSummary>,
}

/// Runs one (replicate, model) cell: generates the replicate's data, fits
/// the model's grid and scores each point against the truth.
pub fn run_cell(cfg: &StudyConfig, replicate: usize, model: Model) -> (Vec<StudyRow>, Vec<StudyFailure>) {
    let fail = |message: String, nu0| StudyFailure {
        replicate,
        model: Some(model),
        nu0,
        message,
    };
    let seed = replicate_seed(cfg.base_seed, replicate);
    let prepared = replicate_data(cfg, replicate).and_then(|(d, beta)| {
        let engine = cfg.engine(model)?.with_seed(derive_seed(seed, 4));
        let path = run_path(&d, cfg.grid(model), &engine)?;
        Ok((beta, path))
    });
    let (beta, path) = match prepared {
        Ok(v) => v,
        Err(e) => return (Vec::new(), vec![fail(e.to_string(), None)]),
    };
    let truth: Vec<bool> = beta.iter().map(|&b| b != 0.0).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for pt in path.points {
        match pt.fit.and_then(|f| selection_metrics(&f.selected, &truth)) {
            Ok(m) => rows.push(StudyRow {
                replicate,
                model,
                nu0: pt.nu0,
                tpr: m.tpr,
                tnr: m.tnr,
                ppv: m.ppv,
                npv: m.npv,
                defined_flags: m.defined_flags(),
                seed,
            }),
            Err(e) => failures.push(fail(e.to_string(), Some(pt.nu0))),
        }
    }
    (rows, failures)
}

/// Grid-wise means over replicates, ordered by model then ν₀.
pub fn summarize(rows: &[StudyRow]) -> Vec<GridSummary> {
    let mut keys: Vec<(Model, f64)> = rows.iter().map(|r| (r.model, r.nu0)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(model, nu0)| {
            let cell: Vec<&StudyRow> = rows
                .iter()
                .filter(|r| r.model == model && r.nu0 == nu0)
                .collect();
            let col = |f: fn(&StudyRow) -> Option<f64>| MeanSe::from_values(cell.iter().map(|r| f(r)));
            GridSummary {
                model,
                nu0,
                tpr: col(|r| r.tpr),
                tnr: col(|r| r.tnr),
                ppv: col(|r| r.ppv),
                npv: col(|r| r.npv),
            }
        })
        .collect()
}

/// Every (replicate, model) cell of the study, in table order.
pub fn study_cells(cfg: &StudyConfig) -> Vec<(usize, Model)> {
    (0..cfg.replicates)
        .flat_map(|r| cfg.model.models().into_iter().map(move |m| (r, m)))
        .collect()
}

/// Runs `cells` on a pool of `worker_count` threads, handing each finished
/// cell to `on_cell` as soon as it completes (in scheduling order).
pub fn run_study_cells<F>(cfg: &StudyConfig, cells: &[(usize, Model)], on_cell: F) -> Result<()>
where
    F: Fn(usize, Model, &[StudyRow], &[StudyFailure]) + Sync,
{
    cfg.validate()?;
    let work = || {
        cells.par_iter().for_each(|&(r, m)| {
            let (rows, failures) = run_cell(cfg, r, m);
            on_cell(r, m, &rows, &failures);
        })
    };
    if cfg.worker_count > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count)
            .build()
            .map_err(|e| EmvsError::InvalidConfig(e.to_string()))?
            .install(work);
    } else {
        work();
    }
    Ok(())
}

/// Sorts rows and failures and attaches the grid summary.
pub fn assemble_table(mut rows: Vec<StudyRow>, mut failures: Vec<StudyFailure>) -> StudyTable {
    sort_rows(&mut rows);
    failures.sort_by(|a, b| {
        a.replicate
            .cmp(&b.replicate)
            .then(a.model.cmp(&b.model))
            .then(a.nu0.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.nu0.unwrap_or(f64::NEG_INFINITY)))
    });
    StudyTable {
        summary: summarize(&rows),
        rows,
        failures,
    }
}

/// Runs the whole study. The table is identical for any worker count and
/// scheduling order.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyTable> {
    let collected = std::sync::Mutex::new((Vec::new(), Vec::new()));
    run_study_cells(cfg, &study_cells(cfg), |_, _, rows, failures| {
        let mut guard = collected.lock().unwrap();
        guard.0.extend_from_slice(rows);
        guard.1.extend_from_slice(failures);
    })?;
    let (rows, failures) = collected.into_inner().unwrap();
    Ok(assemble_table(rows, failures))
}

pub fn sort_rows(rows: &mut [StudyRow]) {
    rows.sort_by(|a, b| {
        a.replicate
            .cmp(&b.replicate)
            .then(a.model.cmp(&b.model))
            .then(a.nu0.total_cmp(&b.nu0))
    });
}

/// Grid point maximizing mean TPR + mean TNR for `model`.
pub fn best_grid_point(summary: &[GridSummary], model: Model) -> Option<&GridSummary> {
    summary
        .iter()
        .filter(|s| s.model == model)
        .filter_map(|s| Some((s, s.tpr.mean? + s.tnr.mean?)))
        .fold(None, |best: Option<(&GridSummary, f64)>, (s, score)| match best {
            Some((_, b)) if b >= score => best,
            _ => Some((s, score)),
        })
        .map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsvsBudget {
    Sweeps(usize),
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub budget: SsvsBudget,
    pub sweeps: usize,
    pub acceptance_rate: f64,
    pub ssvs_selected: Vec<usize>,
    pub emvs_selected: Option<Vec<usize>>,
    pub ssvs: SsvsResult,
}

/// Runs SSVS under `budget`, pairing its selection with an EMVS selection
/// on the same data. A sweep budget replaces `iterations` and keeps the
/// configured burn-in when it fits, otherwise half the sweeps; a time budget
/// runs until the clock expires.
pub fn run_ssvs_comparison(
    d: &Dataset,
    budget: SsvsBudget,
    ssvs_cfg: &SsvsConfig,
    emvs_selected: Option<Vec<usize>>,
) -> Result<ComparisonRecord> {
    let cfg = match budget {
        SsvsBudget::Sweeps(s) => SsvsConfig {
            iterations: s,
            burn_in: if ssvs_cfg.burn_in < s { ssvs_cfg.burn_in } else { s / 2 },
            time_budget: None,
            ..ssvs_cfg.clone()
        },
        SsvsBudget::Seconds(t) => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(EmvsError::InvalidConfig(format!(
                    "time budget must be finite and >= 0, got {t}"
                )));
            }
            SsvsConfig {
                iterations: usize::MAX,
                time_budget: Some(Duration::from_secs_f64(t)),
                ..ssvs_cfg.clone()
            }
        }
    };
    let ssvs = run_ssvs_probit(d, &cfg)?;
    Ok(ComparisonRecord {
        budget,
        sweeps: ssvs.sweeps,
        acceptance_rate: ssvs.acceptance_rate,
        ssvs_selected: ssvs.selected_indices(),
        emvs_selected,
        ssvs,
    })
}
