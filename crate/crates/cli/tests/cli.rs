use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn emvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emvs"))
        .args(args)
        .env_remove("EMVS_BIN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = emvs(args);
    assert!(
        out.status.success(),
        "emvs {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    emvs(args).status.code().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn simulate(dir: &TempDir, prefix: &str, extra: &[&str]) -> (String, String) {
    let out = p(dir, prefix);
    let mut args = vec![
        "simulate", "--n", "60", "--p", "40", "--p-gamma", "4", "--beta", "2,-2,2", "--seed", "7", "--out", &out,
    ];
    args.extend_from_slice(extra);
    ok(&args);
    (format!("{out}_design.csv"), format!("{out}_labels.csv"))
}

/// Deterministic, non-separable p = 2 toy with a weak second column.
fn toy_csv(path: &Path) {
    let mut s = String::from("label,x1,x2\n");
    for i in 1..=50 {
        let t = i as f64;
        let y = (t.sin() + 0.6 * (3.0 * t).cos() + (11.0 * t).sin() > 0.0) as i32;
        writeln!(s, "{y},{},{}", t.sin(), (3.0 * t).cos()).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn simulate_writes_three_deterministic_files() {
    let dir = TempDir::new().unwrap();
    let (design, labels) = simulate(&dir, "a", &[]);
    simulate(&dir, "b", &[]);
    for suffix in ["design", "labels", "truth"] {
        let a = read(p(&dir, &format!("a_{suffix}.csv")));
        assert_eq!(a, read(p(&dir, &format!("b_{suffix}.csv"))), "{suffix}");
    }
    let d = read(&design);
    assert!(d.starts_with("x1,x2,"));
    assert_eq!(d.lines().count(), 61);
    assert!(read(&labels).lines().skip(1).all(|l| l == "1" || l == "-1"));
    let truth = read(p(&dir, "a_truth.csv"));
    assert!(truth.starts_with("column,beta_true\nx1,2.0000000000000000e0\n"));

    simulate(&dir, "c", &["--coding", "01"]);
    assert!(read(p(&dir, "c_labels.csv")).lines().skip(1).all(|l| l == "1" || l == "0"));
}

#[test]
fn simulate_rejects_rho_one() {
    assert_eq!(code(&["simulate", "--rho", "1.0", "--out", "/nonexistent/x"]), 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&["fit", "--bogus"]), 2);
}

#[test]
fn fit_json_and_path() {
    let dir = TempDir::new().unwrap();
    let (design, labels) = simulate(&dir, "s", &[]);
    let fit = p(&dir, "fit.json");
    let path = p(&dir, "path.csv");
    ok(&[
        "fit", "--data", &design, "--labels", &labels, "--model", "logistic", "--out", &fit, "--nu0-grid",
        "1.1:0.3:1.7", "--path-out", &path,
    ]);
    let v = json(&fit);
    for key in [
        "model", "hyper", "nu0", "beta", "p_star", "selected", "iterations", "converged", "wall_time_s", "seed",
        "schema_version",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["model"], "logistic");
    assert_eq!(v["nu0"], 1.5);
    assert_eq!(v["hyper"]["nu1"], 1000.0);
    assert_eq!(v["hyper"]["b"], 40.0);
    assert_eq!(v["beta"].as_array().unwrap().len(), 40);

    let rows = read(&path);
    assert!(rows.starts_with("nu0,column,beta,p_star,selected,converged,iterations\n"));
    assert_eq!(rows.lines().count(), 1 + 3 * 40);
}

#[test]
fn fit_probit_grr_on_wide_data() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "w");
    ok(&["simulate", "--n", "57", "--p", "300", "--p-gamma", "5", "--coding", "01", "--seed", "2", "--out", &out]);
    let fit = p(&dir, "fit.json");
    ok(&[
        "fit", "--data", &format!("{out}_design.csv"), "--labels", &format!("{out}_labels.csv"), "--model",
        "probit", "--beta-solver", "grr", "--out", &fit,
    ]);
    let v = json(&fit);
    assert_eq!(v["model"], "probit");
    assert_eq!(v["hyper"]["nu1"], 100.0);
    assert_eq!(v["label_coding"], "ZeroOne");
}

#[test]
fn leukemia_shaped_smoke() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "leuk");
    ok(&["simulate", "--n", "38", "--p", "7129", "--p-gamma", "10", "--seed", "1", "--out", &out]);
    let fit = p(&dir, "fit.json");
    let msg = ok(&[
        "fit", "--data", &format!("{out}_design.csv"), "--labels", &format!("{out}_labels.csv"), "--model",
        "logistic", "--sdca-picks", "380", "--out", &fit,
    ]);
    assert!(msg.contains("iterations"), "{msg}");
    assert!(json(&fit)["wall_time_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_label_column_names_expectation() {
    let dir = TempDir::new().unwrap();
    let (design, _) = simulate(&dir, "s", &[]);
    let out = emvs(&["fit", "--data", &design, "--model", "logistic", "--out", &p(&dir, "f.json")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"label\""), "{err}");
}

#[test]
fn unreadable_input_is_io_error() {
    assert_eq!(code(&["fit", "--data", "/nonexistent/d.csv", "--model", "probit"]), 3);
}

#[test]
fn predict_zero_beta_is_one_half() {
    let dir = TempDir::new().unwrap();
    let (design, labels) = simulate(&dir, "s", &[]);
    let fit = p(&dir, "fit.json");
    ok(&["fit", "--data", &design, "--labels", &labels, "--model", "logistic", "--out", &fit]);
    let mut v = json(&fit);
    v["beta"] = serde_json::json!(vec![0.0; 40]);
    std::fs::write(&fit, v.to_string()).unwrap();

    let pred = p(&dir, "pred.csv");
    ok(&["predict", "--fit", &fit, "--data", &design, "--out", &pred]);
    let text = read(&pred);
    assert!(text.starts_with("row,probability,class\n"));
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 0.5);
        assert_eq!(f[2], "1", "ties go to the positive class");
    }
}

#[test]
fn predict_rejects_column_mismatch() {
    let dir = TempDir::new().unwrap();
    let (design, labels) = simulate(&dir, "s", &[]);
    let fit = p(&dir, "fit.json");
    ok(&["fit", "--data", &design, "--labels", &labels, "--model", "probit", "--out", &fit]);
    let small = p(&dir, "small.csv");
    std::fs::write(&small, "x1,x2\n1,2\n").unwrap();
    assert_eq!(code(&["predict", "--fit", &fit, "--data", &small, "--out", &p(&dir, "o.csv")]), 2);
}

/// Test rows standardized with the training statistics, and the probit
/// class at cutoff 0.5 equals the sign of the linear predictor.
#[test]
fn predict_with_training_stats() {
    let dir = TempDir::new().unwrap();
    let mut all = String::from("label,a,b,c\n");
    for i in 0..80 {
        let t = i as f64;
        let (a, b, c) = (3.0 + (1.3 * t).sin(), -2.0 + 5.0 * (0.7 * t).cos(), (2.9 * t).sin());
        let y = (a - 3.0 + 0.2 * c > 0.0) as i32;
        writeln!(all, "{y},{a},{b},{c}").unwrap();
    }
    let lines: Vec<&str> = all.lines().collect();
    let train = p(&dir, "train.csv");
    let test = p(&dir, "test.csv");
    std::fs::write(&train, lines[..61].join("\n") + "\n").unwrap();
    std::fs::write(&test, format!("{}\n{}\n", lines[0], lines[61..].join("\n"))).unwrap();

    let fit = p(&dir, "fit.json");
    let stats = p(&dir, "stats.csv");
    ok(&["fit", "--data", &train, "--model", "probit", "--nu0", "0.01", "--out", &fit, "--stats-out", &stats]);
    let pred = p(&dir, "pred.csv");
    let msg = ok(&[
        "predict", "--fit", &fit, "--data", &test, "--label-col", "label", "--standardize-with", &stats, "--out",
        &pred,
    ]);
    assert!(msg.contains("/20 correct"), "{msg}");

    let v = json(&fit);
    let beta: Vec<f64> = v["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect();
    let st: Vec<Vec<f64>> = read(&stats)
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|f| f.parse().unwrap()).collect())
        .collect();
    for (row, pl) in lines[61..].iter().zip(read(&pred).lines().skip(1)) {
        let raw: Vec<f64> = row.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
        let eta: f64 = (0..3).map(|j| beta[j] * (raw[j] - st[j][0]) / st[j][1]).sum();
        let class = pl.split(',').nth(2).unwrap();
        assert_eq!(class, if eta >= 0.0 { "1" } else { "0" });
    }
}

#[test]
fn ssvs_toy_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let out = p(&dir, "ssvs.csv");
    ok(&[
        "ssvs", "--data", data.to_str().unwrap(), "--sweeps", "20000", "--burn-in", "500", "--seed", "1", "--out",
        &out,
    ]);
    // Exhaustive enumeration over the four models.
    let exact = [0.997623383143056, 0.2819408181672733];
    let freqs: Vec<f64> = read(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // γ₂ mixes slowly: between-seed sd at 20k sweeps is ~0.015, so ~3 sd
    assert!((freqs[0] - exact[0]).abs() < 0.01, "{freqs:?}");
    assert!((freqs[1] - exact[1]).abs() < 0.045, "{freqs:?}");
    let summary = json(dir.path().join("ssvs.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["sweeps"], 20000);
}

#[test]
fn ssvs_zero_sweeps_and_repeat() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("toy.csv");
    toy_csv(&data);
    let d = data.to_str().unwrap();
    let zero = p(&dir, "zero.csv");
    ok(&["ssvs", "--data", d, "--sweeps", "0", "--out", &zero]);
    assert_eq!(read(&zero), "column,inclusion_freq,selected\nx1,0.0000000000000000e0,0\nx2,0.0000000000000000e0,0\n");

    let (a, b) = (p(&dir, "a.csv"), p(&dir, "b.csv"));
    for out in [&a, &b] {
        ok(&["ssvs", "--data", d, "--sweeps", "200", "--burn-in", "20", "--seed", "9", "--out", out]);
    }
    assert_eq!(read(&a), read(&b));
}

fn study_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "study", "--beta-max", "2", "--replicates", "3", "--n", "40", "--p", "30", "--p-gamma", "3",
        "--logistic-grid", "1.2,1.8", "--probit-grid", "0.002,0.008", "--seed", "4", "--out-dir", out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn study_resumes_from_manifest() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "study");
    let first = ok(&study_args(&out, &["--workers", "2"]));
    assert!(first.contains("0 cells recorded"), "{first}");
    let table = read(format!("{out}/study.csv"));
    assert!(table.starts_with("replicate,model,nu0,tpr,tnr,ppv,npv,defined_flags,seed\n"));
    assert_eq!(table.lines().count(), 1 + 3 * 2 * 2);
    let summary = read(format!("{out}/summary.csv"));
    assert_eq!(summary.lines().count(), 1 + 4);

    // Drop one cell from the manifest: only that cell reruns, and the
    // final table is unchanged.
    let manifest = format!("{out}/manifest.csv");
    let kept: Vec<String> = read(&manifest).lines().filter(|l| *l != "1,probit").map(String::from).collect();
    std::fs::write(&manifest, kept.join("\n") + "\n").unwrap();
    let second = ok(&study_args(&out, &["--workers", "1"]));
    assert!(second.contains("5 cells recorded") && second.contains("1 to run"), "{second}");
    assert_eq!(read(format!("{out}/study.csv")), table);

    let third = ok(&study_args(&out, &[]));
    assert!(third.contains("0 to run"), "{third}");

    // Different settings in the same directory are refused.
    let args = study_args(&out, &["--rho", "0.3"]);
    assert_eq!(code(&args), 2);
}

#[test]
fn study_worker_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (p(&dir, "a"), p(&dir, "b"));
    ok(&study_args(&a, &["--workers", "1"]));
    ok(&study_args(&b, &["--workers", "3"]));
    for f in ["study.csv", "summary.csv", "manifest.csv", "failures.csv"] {
        assert_eq!(read(format!("{a}/{f}")), read(format!("{b}/{f}")), "{f}");
    }
}

#[test]
fn study_rejects_negative_beta_max_and_unwritable_dir() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "s");
    let mut args = study_args(&out, &[]);
    args[2] = "-1";
    assert_eq!(code(&args), 2);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let nested = blocker.join("out");
    let nested = nested.to_str().unwrap();
    assert_eq!(code(&study_args(nested, &[])), 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg: PathBuf = dir.path().join("sim.conf");
    std::fs::write(&cfg, "# small design\nn = 30\np = 12\np-gamma = 2\nbeta = 1\nseed = 5\n").unwrap();
    let out = p(&dir, "c");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--p", "15", "--out", &out]);
    let header = read(format!("{out}_design.csv")).lines().next().unwrap().to_string();
    assert_eq!(header.split(',').count(), 15);
    assert_eq!(read(format!("{out}_labels.csv")).lines().count(), 31);
}

#[test]
fn missing_config_file_is_io_error() {
    assert_eq!(code(&["simulate", "--config", "/nonexistent/c.conf"]), 3);
}
