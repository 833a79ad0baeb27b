use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use addlogit::harness::{parse_records, parse_summary, FitStatus, Method};
use addlogit::simgen::{gen_dataset, GeneratorSpec, VariableSet};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_addlogit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_one_record_per_rep_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--set",
        "1",
        "--dim",
        "5",
        "--reps",
        "3",
        "--methods",
        "glm,backfit",
        "--train-n",
        "80",
        "--test-n",
        "200",
        "--seed",
        "9",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = parse_records(&out.join("records.csv")).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r.status != FitStatus::Failed));
    assert_eq!(parse_summary(&out.join("summary.csv")).unwrap().len(), 2);
    assert!(out.join("roc_glm.tsv").exists());
    assert!(out.join("curves_backfit_rep0.csv").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("backfit"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("cfg");
    fs::write(
        &cfg,
        format!(
            "methods = [\"glm\", \"gamboost\"]\nreps = 4\ntrain_n = 60\ntest_n = 100\nout = \"{}\"\n",
            path(&out)
        ),
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--config",
        path(&cfg),
        "--reps",
        "2",
        "--sequential",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = parse_records(&out.join("records.csv")).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records[1].method, Method::Gamboost);
}

#[test]
fn resample_reads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(&GeneratorSpec::new(VariableSet::Set1, 5, 120, 4)).unwrap();
    let mut text = String::from("id,");
    let csv = data.to_csv();
    let mut lines = csv.lines();
    text.push_str(lines.next().unwrap());
    text.push('\n');
    for (i, line) in lines.enumerate() {
        text.push_str(&format!("r{i},{line}\n"));
    }
    let file = dir.path().join("data.csv");
    fs::write(&file, text).unwrap();
    let out = dir.path().join("res");
    let o = run(&[
        "resample",
        "--data",
        path(&file),
        "--ignore-columns",
        "id",
        "--label-column",
        "label",
        "--positive-label",
        "1",
        "--reps",
        "3",
        "--methods",
        "glm,pspline",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = parse_records(&out.join("records.csv")).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records
        .iter()
        .all(|r| r.oracle_auc.is_none() && r.auc.is_some()));
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = run(&["simulate", "--methods", "glm,lasso", "--out", path(&out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lasso"));
    let o = run(&["simulate", "--set", "3", "--out", path(&out)]);
    assert!(!o.status.success());
    let o = run(&["resample", "--out", path(&out)]);
    assert!(!o.status.success());
}
