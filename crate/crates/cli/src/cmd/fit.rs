use std::path::PathBuf;

use clap::{Args, ValueEnum};
use emvs_core::harness::run_path;
use emvs_core::{
    BetaSolver, ColumnStats, Dataset, EmState, FitResult, LabelCoding, Model, ModelConfig, Nu0Grid,
    PenaltyMode, SpikeSlabHyper,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, parse_grid, write_json, write_stats, CsvOut, SCHEMA_VERSION};
use crate::{Common, DataArgs, ModelArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Grr,
    Sdca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    PaperLiteral,
    Q1Consistent,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Spike variance [default: 1.5 logistic, 0.005 probit].
    #[arg(long)]
    pub nu0: Option<f64>,
    /// Slab variance [default: 1000 logistic, 100 probit].
    #[arg(long)]
    pub nu1: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Beta prior b [default: p].
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.001)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta_init: f64,
    /// Logistic only.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_init: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// SDCA coordinate picks per M-step.
    #[arg(long, default_value_t = 5000)]
    pub sdca_picks: usize,
    /// Probit β-step solver.
    #[arg(long, value_enum, default_value_t = SolverArg::Grr)]
    pub beta_solver: SolverArg,
    /// Logistic penalty mapping.
    #[arg(long, value_enum, default_value_t = PenaltyArg::PaperLiteral)]
    pub penalty_mode: PenaltyArg,
    /// Fit JSON output.
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
    /// Training column means/sds, for `predict --standardize-with`.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// ν₀ path: comma list or start:step:end; writes --path-out.
    #[arg(long, value_parser = parse_grid)]
    pub nu0_grid: Option<std::vec::Vec<f64>>,
    #[arg(long, default_value = "path.csv")]
    pub path_out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceSummary {
    pub length: usize,
    pub initial: Option<f64>,
    #[serde(rename = "final")]
    pub last: Option<f64>,
    /// Largest per-iteration decrease (0 for a monotone trace).
    pub max_decrease: f64,
}

/// The persisted fit.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitRecord {
    pub schema_version: u32,
    pub model: Model,
    pub hyper: SpikeSlabHyper,
    pub nu0: f64,
    pub columns: Vec<String>,
    pub label_coding: LabelCoding,
    pub standardized: bool,
    pub beta: Vec<f64>,
    pub p_star: Vec<f64>,
    pub selected: Vec<usize>,
    pub selected_columns: Vec<String>,
    pub theta: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: TraceSummary,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl FitRecord {
    fn new(args: &FitArgs, cfg: &ModelConfig, columns: &[String], coding: LabelCoding, fit: &FitResult) -> Self {
        let state: &EmState = &fit.state;
        let selected = fit.selected_indices();
        let t = &fit.objective_trace;
        FitRecord {
            schema_version: SCHEMA_VERSION,
            model: cfg.model(),
            hyper: *cfg.hyper(),
            nu0: cfg.hyper().nu0,
            columns: columns.to_vec(),
            label_coding: coding,
            standardized: !args.data.no_standardize,
            beta: state.beta.clone(),
            p_star: state.p_star.clone(),
            selected_columns: selected.iter().map(|&j| columns[j].clone()).collect(),
            selected,
            theta: state.theta,
            sigma: state.sigma,
            iterations: state.iteration,
            converged: fit.converged,
            trace: TraceSummary {
                length: t.len(),
                initial: t.first().copied(),
                last: t.last().copied(),
                max_decrease: t.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max),
            },
            seed: args.common.seed,
            wall_time_s: fit.wall_time,
        }
    }
}

pub fn engine(args: &FitArgs, p: usize) -> CliResult<ModelConfig> {
    let model: Model = args.model.into();
    let nu0 = args.nu0.unwrap_or(match model {
        Model::Logistic => 1.5,
        Model::Probit => 0.005,
    });
    let mut cfg = ModelConfig::paper_default(model, p, nu0)?;
    let nu1 = args.nu1.unwrap_or(cfg.hyper().nu1);
    let hyper = SpikeSlabHyper::new(nu0, nu1, args.a, args.b.unwrap_or(p as f64), args.nu, args.lambda)?;
    match &mut cfg {
        ModelConfig::Logistic(c) => {
            c.hyper = hyper;
            c.max_em_iterations = args.max_iter;
            c.convergence_tol = args.tol;
            c.theta_init = args.theta_init;
            c.sigma_init = args.sigma_init;
            c.sdca.max_picks = args.sdca_picks;
            c.penalty_mode = match args.penalty_mode {
                PenaltyArg::PaperLiteral => PenaltyMode::PaperLiteral,
                PenaltyArg::Q1Consistent => PenaltyMode::Q1Consistent,
            };
        }
        ModelConfig::Probit(c) => {
            c.hyper = hyper;
            c.max_em_iterations = args.max_iter;
            c.convergence_tol = args.tol;
            c.theta_init = args.theta_init;
            c.sdca.max_picks = args.sdca_picks;
            c.beta_solver = match args.beta_solver {
                SolverArg::Grr => BetaSolver::Grr,
                SolverArg::Sdca => BetaSolver::Sdca,
            };
        }
    }
    Ok(cfg.with_seed(args.common.seed))
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let (table, y, coding) = args.data.read()?;
    let (x, stats) = if args.data.no_standardize {
        (table.x, None)
    } else {
        let stats = ColumnStats::from_matrix(&table.x)?;
        (stats.apply(&table.x)?, Some(stats))
    };
    let d = Dataset::new(x, y, coding)?;
    let cfg = engine(args, d.p())?;

    let fit = cfg.fit(&d).map_err(|e| match e {
        emvs_core::EmvsError::InvalidConfig(_) | emvs_core::EmvsError::InvalidHyper(_) => CliError::from(e),
        other => CliError::Numerical(other.to_string()),
    })?;
    let record = FitRecord::new(args, &cfg, &table.columns, coding, &fit);
    write_json(&args.out, &record)?;
    if let (Some(path), Some(stats)) = (&args.stats_out, &stats) {
        write_stats(path, &table.columns, stats)?;
    }
    println!(
        "{} fit, nu0 = {}: {} selected {:?}, {} iterations, converged = {}, {:.3}s",
        record.model,
        record.nu0,
        record.selected.len(),
        record.selected_columns,
        record.iterations,
        record.converged,
        record.wall_time_s
    );

    if let Some(values) = &args.nu0_grid {
        let grid = Nu0Grid::new(values.clone())?;
        grid.validate_against(cfg.hyper().nu1)?;
        let path = run_path(&d, &grid, &cfg)?;
        let mut out = CsvOut::create(
            &args.path_out,
            &["nu0", "column", "beta", "p_star", "selected", "converged", "iterations"],
        )?;
        for pt in &path.points {
            let fit = pt.fit.as_ref().map_err(|e| CliError::Numerical(format!("nu0 = {}: {e}", pt.nu0)))?;
            for (j, name) in table.columns.iter().enumerate() {
                out.row(&[
                    fmt_f64(pt.nu0),
                    name.clone(),
                    fmt_f64(fit.state.beta[j]),
                    fmt_f64(fit.state.p_star[j]),
                    (fit.selected[j] as u8).to_string(),
                    fit.converged.to_string(),
                    fit.state.iteration.to_string(),
                ])?;
            }
        }
        out.finish()?;
        println!(
            "path of {} points written to {} ({:.3}s total)",
            path.len(),
            args.path_out.display(),
            path.total_wall_time()
        );
    }
    Ok(())
}
