use std::path::PathBuf;

use clap::Args;
use emvs_core::harness::simulate_dataset;
use emvs_core::{recode, DesignSpec, LabelCoding};

use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, parse_list, write_matrix, CsvOut};
use crate::{Coding, Common};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    /// Number of related columns.
    #[arg(long, default_value_t = 10)]
    pub p_gamma: usize,
    /// Correlation between related and unrelated columns; must be < 1.
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    /// Leading coefficients, zero-padded to p.
    #[arg(long, default_value = "1,2,3", value_parser = parse_list, allow_hyphen_values = true)]
    pub beta: std::vec::Vec<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_eps2: f64,
    #[arg(long, value_enum, default_value_t = Coding::PlusMinusOne)]
    pub coding: Coding,
    /// Output prefix: writes PREFIX_design.csv, PREFIX_labels.csv, PREFIX_truth.csv.
    #[arg(long, default_value = "sim")]
    pub out: String,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    if args.beta.len() > args.p {
        return Err(CliError::usage(format!("{} coefficients for p = {}", args.beta.len(), args.p)));
    }
    let mut beta = args.beta.clone();
    beta.resize(args.p, 0.0);
    let design = DesignSpec {
        n: args.n,
        p: args.p,
        p_gamma: args.p_gamma,
        rho: args.rho,
        seed: 0,
    };
    design.validate()?;
    let mut d = simulate_dataset(&design, &beta, args.sigma_eps2, args.common.seed)?;
    if args.coding == Coding::ZeroOne {
        d = recode(&d, LabelCoding::ZeroOne);
    }

    let columns: Vec<String> = (1..=args.p).map(|j| format!("x{j}")).collect();
    let design_path = PathBuf::from(format!("{}_design.csv", args.out));
    let labels_path = PathBuf::from(format!("{}_labels.csv", args.out));
    let truth_path = PathBuf::from(format!("{}_truth.csv", args.out));
    write_matrix(&design_path, &columns, &d.x)?;

    let mut labels = CsvOut::create(&labels_path, &["label"])?;
    for y in &d.y {
        labels.row(&[y.to_string()])?;
    }
    labels.finish()?;

    let mut truth = CsvOut::create(&truth_path, &["column", "beta_true"])?;
    for (name, b) in columns.iter().zip(&beta) {
        truth.row(&[name.clone(), fmt_f64(*b)])?;
    }
    truth.finish()?;

    let positives = d.y.iter().filter(|&&y| y == 1).count();
    println!(
        "seed {}: n = {}, p = {}, {} positive labels; wrote {}, {}, {}",
        args.common.seed,
        args.n,
        args.p,
        positives,
        design_path.display(),
        labels_path.display(),
        truth_path.display()
    );
    Ok(())
}
