use std::path::PathBuf;

use clap::Args;
use emvs_core::harness::SsvsBudget;
use emvs_core::{run_ssvs_comparison, standardize, Dataset, SsvsConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, write_json, CsvOut, SCHEMA_VERSION};
use crate::{Common, DataArgs};

#[derive(Debug, Args)]
pub struct SsvsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1000.0)]
    pub nu1: f64,
    /// 0 is a point-mass spike.
    #[arg(long, default_value_t = 0.0)]
    pub nu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Total sweeps including burn-in.
    #[arg(long, default_value_t = 2000, conflicts_with = "seconds")]
    pub sweeps: usize,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    /// Single-flip proposals per sweep.
    #[arg(long, default_value_t = 1000)]
    pub metropolis_steps: usize,
    /// Wall-clock budget instead of a sweep count.
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Inclusion-frequency CSV.
    #[arg(long, default_value = "ssvs.csv")]
    pub out: PathBuf,
    /// Run summary JSON [default: OUT with a .json extension].
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Serialize)]
struct SsvsSummary {
    schema_version: u32,
    sweeps: usize,
    burn_in_used: usize,
    acceptance_rate: f64,
    selected: Vec<usize>,
    selected_columns: Vec<String>,
    active_set_overflow: bool,
    seed: u64,
    wall_time_s: f64,
}

pub fn run(args: &SsvsArgs) -> CliResult<()> {
    let (table, y, coding) = args.data.read()?;
    let x = if args.data.no_standardize { table.x } else { standardize(&table.x)? };
    let d = Dataset::new(x, y, coding)?;
    let cfg = SsvsConfig {
        nu1: args.nu1,
        nu0: args.nu0,
        a: args.a,
        b: args.b,
        iterations: args.sweeps,
        burn_in: args.burn_in,
        metropolis_steps_per_sweep: args.metropolis_steps,
        seed: args.common.seed,
        time_budget: None,
    };
    let budget = match args.seconds {
        Some(t) => SsvsBudget::Seconds(t),
        None => SsvsBudget::Sweeps(args.sweeps),
    };
    let rec = run_ssvs_comparison(&d, budget, &cfg, None).map_err(|e| match e {
        emvs_core::EmvsError::SingularSystem | emvs_core::EmvsError::NonFinite => CliError::Numerical(e.to_string()),
        other => CliError::from(other),
    })?;
    let r = &rec.ssvs;

    let mut out = CsvOut::create(&args.out, &["column", "inclusion_freq", "selected"])?;
    for (j, name) in table.columns.iter().enumerate() {
        out.row(&[name.clone(), fmt_f64(r.gamma_inclusion_freq[j]), (r.selected[j] as u8).to_string()])?;
    }
    out.finish()?;
    let summary_path = args.summary_out.clone().unwrap_or_else(|| args.out.with_extension("json"));
    let summary = SsvsSummary {
        schema_version: SCHEMA_VERSION,
        sweeps: r.sweeps,
        burn_in_used: r.burn_in_used,
        acceptance_rate: r.acceptance_rate,
        selected_columns: rec.ssvs_selected.iter().map(|&j| table.columns[j].clone()).collect(),
        selected: rec.ssvs_selected.clone(),
        active_set_overflow: r.active_set_overflow,
        seed: args.common.seed,
        wall_time_s: r.wall_time,
    };
    write_json(&summary_path, &summary)?;
    println!(
        "{} sweeps ({} burn-in), acceptance {:.4}, selected {:?}",
        summary.sweeps, summary.burn_in_used, summary.acceptance_rate, summary.selected_columns
    );
    Ok(())
}
