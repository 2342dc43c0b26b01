//! `emvs`: simulate data, fit spike-and-slab selection paths, predict,
//! run simulation studies and the stochastic-search baseline.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical failure.

mod cmd;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emvs_core::Model;

use crate::error::CliResult;
use crate::io::{read_labeled, Table};

#[derive(Debug, Parser)]
#[command(name = "emvs", version, about = "EM spike-and-slab variable selection for binary responses")]
struct Cli {
    /// key = value file of default flags; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "EMVS_BIN_THREADS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a correlated design, labels and the true coefficients.
    Simulate(cmd::simulate::SimulateArgs),
    /// Fit one ν₀ (and optionally a ν₀ path).
    Fit(cmd::fit::FitArgs),
    /// Score new data with a saved fit.
    Predict(cmd::predict::PredictArgs),
    /// Replicated simulation study over ν₀ grids.
    Study(cmd::study::StudyArgs),
    /// Stochastic search variable selection (probit, point-mass spike).
    Ssvs(cmd::ssvs::SsvsArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV; rows are observations.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column inside --data.
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Separate label file (its `label` column, else its first column).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Use the columns as given instead of centering and scaling them.
    #[arg(long)]
    pub no_standardize: bool,
}

impl DataArgs {
    pub fn read(&self) -> CliResult<(Table, Vec<i32>, emvs_core::LabelCoding)> {
        read_labeled(&self.data, &self.label_col, self.labels.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logistic,
    Probit,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Logistic => Model::Logistic,
            ModelArg::Probit => Model::Probit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Coding {
    /// Labels in {-1, 1}.
    #[value(name = "pm1")]
    PlusMinusOne,
    /// Labels in {0, 1}.
    #[value(name = "01")]
    ZeroOne,
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.workers > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => cmd::simulate::run(a),
        Command::Fit(a) => cmd::fit::run(a),
        Command::Predict(a) => cmd::predict::run(a),
        Command::Study(a) => cmd::study::run(a, cli.workers),
        Command::Ssvs(a) => cmd::ssvs::run(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("emvs: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emvs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

