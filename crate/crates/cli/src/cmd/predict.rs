use std::path::PathBuf;

use clap::Args;
use emvs_core::{predict_logistic, predict_probit, LabelCoding, Model};

use crate::cmd::fit::FitRecord;
use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, read_stats, read_table, CsvOut};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit JSON written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Column holding true labels, if present; enables the confusion counts.
    #[arg(long)]
    pub label_col: Option<String>,
    /// Training statistics from `fit --stats-out`.
    #[arg(long)]
    pub standardize_with: Option<PathBuf>,
    /// Probabilities at or above the cutoff are classed positive.
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    if !(args.cutoff > 0.0 && args.cutoff < 1.0) {
        return Err(CliError::usage(format!("cutoff must lie in (0, 1), got {}", args.cutoff)));
    }
    let text = std::fs::read_to_string(&args.fit).map_err(|e| CliError::io(&args.fit, e))?;
    let fit: FitRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: not a fit file: {e}", args.fit.display())))?;
    let table = read_table(&args.data, args.label_col.as_deref())?;
    if table.columns.len() != fit.beta.len() {
        return Err(CliError::usage(format!(
            "data has {} feature columns, the fit has {}",
            table.columns.len(),
            fit.beta.len()
        )));
    }
    let x = match &args.standardize_with {
        Some(path) => {
            let (_, stats) = read_stats(path)?;
            stats.apply(&table.x)?
        }
        None => {
            if fit.standardized {
                eprintln!("warning: fit was trained on standardized columns; pass --standardize-with to match");
            }
            table.x
        }
    };
    let probs = match fit.model {
        Model::Logistic => predict_logistic(&fit.beta, &x)?,
        Model::Probit => predict_probit(&fit.beta, &x)?,
    };
    let negative = match fit.label_coding {
        LabelCoding::PlusMinusOne => -1,
        LabelCoding::ZeroOne => 0,
    };

    let mut header = vec!["row", "probability", "class"];
    if table.labels.is_some() {
        header.push("label");
    }
    let mut out = CsvOut::create(&args.out, &header)?;
    let mut confusion = Confusion::default();
    for (i, &q) in probs.iter().enumerate() {
        let positive = q >= args.cutoff;
        let class = if positive { 1 } else { negative };
        let mut row = vec![(i + 1).to_string(), fmt_f64(q), class.to_string()];
        if let Some(labels) = &table.labels {
            let truth = labels[i] == 1;
            match (positive, truth) {
                (true, true) => confusion.tp += 1,
                (true, false) => confusion.fp += 1,
                (false, false) => confusion.tn += 1,
                (false, true) => confusion.fn_ += 1,
            }
            row.push(labels[i].to_string());
        }
        out.row(&row)?;
    }
    out.finish()?;
    if table.labels.is_some() {
        println!(
            "{}/{} correct (tp {}, fp {}, tn {}, fn {})",
            confusion.correct(),
            probs.len(),
            confusion.tp,
            confusion.fp,
            confusion.tn,
            confusion.fn_
        );
    } else {
        println!("{} predictions written to {}", probs.len(), args.out.display());
    }
    Ok(())
}
