//! Resumable simulation study. Each finished (replicate, model) cell is
//! written to `cells/` and then recorded in `manifest.csv`; a rerun with the
//! same flags skips recorded cells.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, ValueEnum};
use emvs_core::harness::{assemble_table, best_grid_point, run_study_cells, study_cells, StudyFailure, StudyRow};
use emvs_core::{Model, Nu0Grid, StudyConfig, StudyModel};

use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, fmt_opt, parse_grid, parse_opt, CsvOut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyModelArg {
    Logistic,
    Probit,
    Both,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 10)]
    pub p_gamma: usize,
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_eps2: f64,
    #[arg(long, default_value = "1.02:0.02:2", value_parser = parse_grid)]
    pub logistic_grid: std::vec::Vec<f64>,
    #[arg(long, default_value = "0.0002:0.0002:0.01", value_parser = parse_grid)]
    pub probit_grid: std::vec::Vec<f64>,
    #[arg(long, value_enum, default_value_t = StudyModelArg::Both)]
    pub model: StudyModelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "study")]
    pub out_dir: PathBuf,
}

const ROW_HEADER: [&str; 9] = ["replicate", "model", "nu0", "tpr", "tnr", "ppv", "npv", "defined_flags", "seed"];
const FAILURE_HEADER: [&str; 4] = ["replicate", "model", "nu0", "message"];

impl StudyArgs {
    fn config(&self, workers: usize) -> CliResult<StudyConfig> {
        if !(self.beta_max.is_finite() && self.beta_max > 0.0) {
            return Err(CliError::usage(format!("--beta-max must be positive, got {}", self.beta_max)));
        }
        let mut cfg = StudyConfig::new(self.beta_max, self.replicates);
        cfg.n = self.n;
        cfg.p = self.p;
        cfg.p_gamma = self.p_gamma;
        cfg.rho = self.rho;
        cfg.sigma_eps2 = self.sigma_eps2;
        cfg.logistic_grid = Nu0Grid::new(self.logistic_grid.clone())?;
        cfg.probit_grid = Nu0Grid::new(self.probit_grid.clone())?;
        cfg.model = match self.model {
            StudyModelArg::Logistic => StudyModel::Logistic,
            StudyModelArg::Probit => StudyModel::Probit,
            StudyModelArg::Both => StudyModel::Both,
        };
        cfg.base_seed = self.seed;
        cfg.worker_count = workers;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything that determines the table (worker count excluded).
    fn fingerprint(&self) -> String {
        let grid = |g: &[f64]| g.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
        format!(
            "beta-max = {}\nreplicates = {}\nn = {}\np = {}\np-gamma = {}\nrho = {}\nsigma-eps2 = {}\n\
             logistic-grid = {}\nprobit-grid = {}\nmodel = {:?}\nseed = {}\n",
            fmt_f64(self.beta_max),
            self.replicates,
            self.n,
            self.p,
            self.p_gamma,
            fmt_f64(self.rho),
            fmt_f64(self.sigma_eps2),
            grid(&self.logistic_grid),
            grid(&self.probit_grid),
            self.model,
            self.seed
        )
    }
}

fn parse_model(s: &str) -> CliResult<Model> {
    match s {
        "logistic" => Ok(Model::Logistic),
        "probit" => Ok(Model::Probit),
        _ => Err(CliError::usage(format!("unknown model {s:?}"))),
    }
}

fn cell_path(dir: &Path, r: usize, m: Model, kind: &str) -> PathBuf {
    dir.join("cells").join(format!("r{r:05}_{m}.{kind}.csv"))
}

fn row_fields(row: &StudyRow) -> Vec<String> {
    vec![
        row.replicate.to_string(),
        row.model.to_string(),
        fmt_f64(row.nu0),
        fmt_opt(row.tpr),
        fmt_opt(row.tnr),
        fmt_opt(row.ppv),
        fmt_opt(row.npv),
        row.defined_flags.clone(),
        row.seed.to_string(),
    ]
}

fn failure_fields(f: &StudyFailure) -> Vec<String> {
    vec![
        f.replicate.to_string(),
        f.model.map_or_else(|| "NA".into(), |m| m.to_string()),
        fmt_opt(f.nu0),
        f.message.clone(),
    ]
}

fn write_rows(path: &Path, rows: &[StudyRow]) -> CliResult<()> {
    let mut out = CsvOut::create(path, &ROW_HEADER)?;
    for r in rows {
        out.row(&row_fields(r))?;
    }
    out.finish()
}

fn write_failures(path: &Path, failures: &[StudyFailure]) -> CliResult<()> {
    let mut out = CsvOut::create(path, &FAILURE_HEADER)?;
    for f in failures {
        out.row(&failure_fields(f))?;
    }
    out.finish()
}

fn records(path: &Path) -> CliResult<Vec<csv::StringRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    rdr.records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> CliResult<T> {
    s.parse().map_err(|_| CliError::usage(format!("bad field {s:?}")))
}

fn read_rows(path: &Path) -> CliResult<Vec<StudyRow>> {
    records(path)?
        .iter()
        .map(|r| {
            Ok(StudyRow {
                replicate: parse_num(&r[0])?,
                model: parse_model(&r[1])?,
                nu0: parse_num(&r[2])?,
                tpr: parse_opt(&r[3])?,
                tnr: parse_opt(&r[4])?,
                ppv: parse_opt(&r[5])?,
                npv: parse_opt(&r[6])?,
                defined_flags: r[7].to_string(),
                seed: parse_num(&r[8])?,
            })
        })
        .collect()
}

fn read_failures(path: &Path) -> CliResult<Vec<StudyFailure>> {
    records(path)?
        .iter()
        .map(|r| {
            Ok(StudyFailure {
                replicate: parse_num(&r[0])?,
                model: if &r[1] == "NA" { None } else { Some(parse_model(&r[1])?) },
                nu0: parse_opt(&r[2])?,
                message: r[3].to_string(),
            })
        })
        .collect()
}

fn read_manifest(path: &Path) -> CliResult<BTreeSet<(usize, Model)>> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    records(path)?
        .iter()
        .map(|r| Ok((parse_num(&r[0])?, parse_model(&r[1])?)))
        .collect()
}

fn write_manifest(path: &Path, done: &BTreeSet<(usize, Model)>) -> CliResult<()> {
    let mut out = CsvOut::create(path, &["replicate", "model"])?;
    for (r, m) in done {
        out.row(&[r.to_string(), m.to_string()])?;
    }
    out.finish()
}

pub fn run(args: &StudyArgs, workers: usize) -> CliResult<()> {
    let cfg = args.config(workers)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir.join("cells")).map_err(|e| CliError::io(dir, e))?;

    let fp_path = dir.join("study_config.txt");
    let fingerprint = args.fingerprint();
    if fp_path.exists() {
        let old = std::fs::read_to_string(&fp_path).map_err(|e| CliError::io(&fp_path, e))?;
        if old != fingerprint {
            return Err(CliError::usage(format!(
                "{} holds a study with different settings; use a fresh --out-dir",
                dir.display()
            )));
        }
    } else {
        std::fs::write(&fp_path, &fingerprint).map_err(|e| CliError::io(&fp_path, e))?;
    }

    let manifest_path = dir.join("manifest.csv");
    let done = read_manifest(&manifest_path)?;
    let todo: Vec<(usize, Model)> = study_cells(&cfg).into_iter().filter(|c| !done.contains(c)).collect();
    println!(
        "{} cells recorded in {}, {} to run",
        done.len(),
        manifest_path.display(),
        todo.len()
    );

    if !todo.is_empty() {
        if !manifest_path.exists() {
            write_manifest(&manifest_path, &done)?;
        }
        let manifest = Mutex::new(
            std::fs::OpenOptions::new()
                .append(true)
                .open(&manifest_path)
                .map_err(|e| CliError::io(&manifest_path, e))?,
        );
        let first_error: Mutex<Option<CliError>> = Mutex::new(None);
        run_study_cells(&cfg, &todo, |r, m, rows, failures| {
            let result = write_rows(&cell_path(dir, r, m, "rows"), rows)
                .and_then(|_| write_failures(&cell_path(dir, r, m, "failures"), failures))
                .and_then(|_| {
                    use std::io::Write;
                    let mut f = manifest.lock().unwrap();
                    writeln!(f, "{r},{m}").map_err(|e| CliError::io(&manifest_path, e))
                });
            if let Err(e) = result {
                first_error.lock().unwrap().get_or_insert(e);
            }
        })?;
        if let Some(e) = first_error.into_inner().unwrap() {
            return Err(e);
        }
    }

    let mut all = read_manifest(&manifest_path)?;
    all.retain(|c| c.0 < cfg.replicates);
    let (mut rows, mut failures) = (Vec::new(), Vec::new());
    for &(r, m) in &all {
        rows.extend(read_rows(&cell_path(dir, r, m, "rows"))?);
        failures.extend(read_failures(&cell_path(dir, r, m, "failures"))?);
    }
    write_manifest(&manifest_path, &all)?;
    let table = assemble_table(rows, failures);

    write_rows(&dir.join("study.csv"), &table.rows)?;
    write_failures(&dir.join("failures.csv"), &table.failures)?;
    let mut summary = CsvOut::create(
        &dir.join("summary.csv"),
        &[
            "model", "nu0", "tpr_mean", "tpr_se", "tpr_n", "tnr_mean", "tnr_se", "tnr_n", "ppv_mean", "ppv_se",
            "ppv_n", "npv_mean", "npv_se", "npv_n",
        ],
    )?;
    for s in &table.summary {
        let mut row = vec![s.model.to_string(), fmt_f64(s.nu0)];
        for m in [&s.tpr, &s.tnr, &s.ppv, &s.npv] {
            row.extend([fmt_opt(m.mean), fmt_opt(m.se), m.count.to_string()]);
        }
        summary.row(&row)?;
    }
    summary.finish()?;

    for model in cfg.model.models() {
        if let Some(best) = best_grid_point(&table.summary, model) {
            let show = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
            println!(
                "{model}: best nu0 = {} (TPR {}, TNR {}, PPV {}, NPV {})",
                best.nu0,
                show(best.tpr.mean),
                show(best.tnr.mean),
                show(best.ppv.mean),
                show(best.npv.mean)
            );
        }
    }
    if !table.failures.is_empty() {
        eprintln!("{} fits failed; see failures.csv", table.failures.len());
    }
    Ok(())
}
