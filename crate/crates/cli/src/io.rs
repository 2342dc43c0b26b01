//! CSV and JSON plumbing. Every CSV has a header row; floats are written
//! with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use emvs_core::nalgebra::DMatrix;
use emvs_core::{ColumnStats, LabelCoding};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

pub fn parse_opt(field: &str) -> CliResult<Option<f64>> {
    if field == "NA" {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| CliError::usage(format!("bad number {field:?}")))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::io(path, e)
    } else {
        CliError::usage(format!("{}: {e}", path.display()))
    }
}

/// A numeric table with optional labels split out.
pub struct Table {
    pub columns: Vec<String>,
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<i32>>,
}

fn parse_label(field: &str, path: &Path, row: usize) -> CliResult<i32> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{}: row {row}: bad label {field:?}", path.display())))?;
    if v.fract() != 0.0 || !(v == -1.0 || v == 0.0 || v == 1.0) {
        return Err(CliError::usage(format!(
            "{}: row {row}: label {field:?} is not in {{0,1}} or {{-1,1}}",
            path.display()
        )));
    }
    Ok(v as i32)
}

/// Reads a numeric CSV. When `label_col` is given that column becomes the
/// label vector and is dropped from the design.
pub fn read_table(path: &Path, label_col: Option<&str>) -> CliResult<Table> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = match label_col {
        Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::usage(format!(
                "{}: expected a label column named {name:?} (set --label-col or pass --labels)",
                path.display()
            ))
        })?),
        None => None,
    };
    let columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        n += 1;
        for (k, field) in rec.iter().enumerate() {
            if Some(k) == label_idx {
                labels.push(parse_label(field, path, n)?);
            } else {
                values.push(field.trim().parse::<f64>().map_err(|_| {
                    CliError::usage(format!("{}: row {n}: bad number {field:?}", path.display()))
                })?);
            }
        }
    }
    Ok(Table {
        x: DMatrix::from_row_slice(n, columns.len(), &values),
        columns,
        labels: label_idx.map(|_| labels),
    })
}

/// Reads labels from the `label` column of `path`, or its first column.
pub fn read_labels(path: &Path) -> CliResult<Vec<i32>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let idx = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .position(|h| h.trim() == "label")
        .unwrap_or(0);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = rec
            .get(idx)
            .ok_or_else(|| CliError::usage(format!("{}: row {}: missing label", path.display(), row + 1)))?;
        out.push(parse_label(field, path, row + 1)?);
    }
    Ok(out)
}

/// Design and labels from `--data` plus either `--labels` or `--label-col`.
pub fn read_labeled(data: &Path, label_col: &str, labels: Option<&Path>) -> CliResult<(Table, Vec<i32>, LabelCoding)> {
    let (mut table, y) = match labels {
        Some(lp) => {
            let t = read_table(data, None)?;
            let y = read_labels(lp)?;
            (t, y)
        }
        None => {
            let mut t = read_table(data, Some(label_col))?;
            let y = t.labels.take().unwrap_or_default();
            (t, y)
        }
    };
    if y.len() != table.x.nrows() {
        return Err(CliError::usage(format!(
            "{} data rows but {} labels",
            table.x.nrows(),
            y.len()
        )));
    }
    let coding = LabelCoding::detect(&y)
        .ok_or_else(|| CliError::usage("labels must all be in {0,1} or all in {-1,1}"))?;
    table.labels = None;
    Ok((table, y, coding))
}

pub struct CsvOut {
    path: std::path::PathBuf,
    w: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = CsvOut {
            path: path.to_path_buf(),
            w: csv::Writer::from_writer(file),
        };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> CliResult<()> {
        self.w.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn write_matrix(path: &Path, columns: &[String], x: &DMatrix<f64>) -> CliResult<()> {
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(path, &header)?;
    for i in 0..x.nrows() {
        let row: Vec<String> = x.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.row(&row)?;
    }
    out.finish()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Training column statistics: `column,mean,sd`.
pub fn write_stats(path: &Path, columns: &[String], stats: &ColumnStats) -> CliResult<()> {
    let mut out = CsvOut::create(path, &["column", "mean", "sd"])?;
    for (j, name) in columns.iter().enumerate() {
        out.row(&[name.clone(), fmt_f64(stats.means[j]), fmt_f64(stats.sds[j])])?;
    }
    out.finish()
}

pub fn read_stats(path: &Path) -> CliResult<(Vec<String>, ColumnStats)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let (mut names, mut means, mut sds) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 3 {
            return Err(CliError::usage(format!("{}: expected column,mean,sd", path.display())));
        }
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("{}: bad number {:?}", path.display(), &rec[k])))
        };
        names.push(rec[0].to_string());
        means.push(num(1)?);
        sds.push(num(2)?);
    }
    Ok((names, ColumnStats { means, sds }))
}

/// Parses `"1,2,3"` into floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

/// Grid spec: a comma list, or `start:step:end` (inclusive).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, step, end] => {
            let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}"));
            let (start, step, end) = (num(start)?, num(step)?, num(end)?);
            if !(step > 0.0 && end >= start) {
                return Err("grid needs step > 0 and end >= start".into());
            }
            let count = ((end - start) / step).round() as usize + 1;
            Ok((0..count)
                .map(|k| {
                    let v = start + step * k as f64;
                    (v * 1e12).round() / 1e12
                })
                .collect())
        }
        [_] => parse_list(s),
        _ => Err(format!("bad grid {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17);
        }
    }

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        let g = parse_grid("1.02:0.02:2").unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[49], 2.0);
        assert!(parse_grid("1:0:2").is_err());
    }

    #[test]
    fn label_column_split_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,label,b\n1,1,2\n3,0,4\n").unwrap();
        let t = read_table(&p, Some("label")).unwrap();
        assert_eq!(t.columns, vec!["a", "b"]);
        assert_eq!(t.labels.unwrap(), vec![1, 0]);
        assert_eq!(t.x[(1, 1)], 4.0);
        match read_table(&p, Some("y")) {
            Err(CliError::Usage(m)) => assert!(m.contains("\"y\"")),
            _ => panic!("expected usage error"),
        }
    }

    #[test]
    fn stats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let stats = ColumnStats {
            means: vec![0.1, -3.0],
            sds: vec![1.0 / 3.0, 2.0],
        };
        write_stats(&p, &["a".into(), "b".into()], &stats).unwrap();
        assert_eq!(read_stats(&p).unwrap().1, stats);
    }
}
