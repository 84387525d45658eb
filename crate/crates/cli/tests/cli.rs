use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_g3m-arb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

struct Fixture {
    dir: TempDir,
    pool: PathBuf,
    prices: PathBuf,
}

fn worked() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let pool = write(dir.path(), "pool.json", r#"{"reserves":[100,100],"weights":[0.5,0.5],"fee_gamma":1.0}"#);
    let prices = write(dir.path(), "prices.json", r#"{"prices":[1.1,1.0]}"#);
    Fixture { dir, pool, prices }
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn arb_on_worked_instance_reports_trade() {
    let f = worked();
    let out = run(&["arb", "--pool", s(&f.pool), "--prices", s(&f.prices)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let exact = 100.0 * (2.1 - 2.0 * 1.1f64.sqrt());
    assert!((v["profit"].as_f64().unwrap() - exact).abs() < 1e-9);
    assert_eq!(v["signature"], serde_json::json!([-1, 1]));
    assert_eq!(v["delta"][0].as_f64(), Some(0.0));
    assert_eq!(v["lambda"][1].as_f64(), Some(0.0));
    assert!(v["invariant_residual"].as_f64().unwrap().abs() <= 1e-9);
}

#[test]
fn baseline_agrees_with_closed_form() {
    let f = worked();
    let closed = json(&run(&["arb", "--pool", s(&f.pool), "--prices", s(&f.prices)]));
    let out = run(&["arb", "--pool", s(&f.pool), "--prices", s(&f.prices), "--method", "baseline"]);
    assert_eq!(out.status.code(), Some(0));
    let base = json(&out);
    let gap = closed["profit"].as_f64().unwrap() - base["profit"].as_f64().unwrap();
    assert!(gap.abs() < 1e-4, "{gap}");
}

#[test]
fn equilibrium_exits_three_with_zero_trade() {
    let f = worked();
    let eq = write(f.dir.path(), "eq.json", r#"{"prices":[1.0,1.0]}"#);
    let out = run(&["arb", "--pool", s(&f.pool), "--prices", s(&eq)]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["profit"].as_f64(), Some(0.0));
    assert!(v["phi"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
}

#[test]
fn malformed_input_names_the_field() {
    let f = worked();
    let bad = write(f.dir.path(), "bad.json", r#"{"reserves":[100,100],"weights":[0.5,0.6],"fee_gamma":1.0}"#);
    let out = run(&["arb", "--pool", s(&bad), "--prices", s(&f.prices)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weights"));

    let short = write(f.dir.path(), "short.json", r#"{"prices":[1.0]}"#);
    let out = run(&["arb", "--pool", s(&f.pool), "--prices", s(&short)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prices"));
}

#[test]
fn arb_output_round_trips_through_verify() {
    let f = worked();
    let out = run(&["arb", "--pool", s(&f.pool), "--prices", s(&f.prices)]);
    let trade = write(f.dir.path(), "trade.json", &String::from_utf8_lossy(&out.stdout));
    let check = run(&["verify", "--pool", s(&f.pool), "--prices", s(&f.prices), "--trade", s(&trade)]);
    assert_eq!(check.status.code(), Some(0));
    let v = json(&check);
    assert_eq!(v["valid"], Value::Bool(true));
    assert_eq!(v["profit"], json(&out)["profit"]);

    let off = write(f.dir.path(), "off.json", r#"{"phi":[-4.0,4.880884817015243]}"#);
    let check = run(&["verify", "--pool", s(&f.pool), "--prices", s(&f.prices), "--trade", s(&off)]);
    assert_eq!(check.status.code(), Some(2));
}

#[test]
fn enumerate_counts_and_lists() {
    let out = run(&["enumerate", "3"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "12");
    let out = run(&["enumerate", "4"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "50");
    let out = run(&["enumerate", "2", "--list"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
    let out = run(&["enumerate", "20"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "3484687250");
    assert_eq!(run(&["enumerate", "13", "--list"]).status.code(), Some(1));
    assert_eq!(run(&["enumerate", "31"]).status.code(), Some(1));
    let out = run(&["enumerate", "3", "--fraction"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fraction 0.444"));
}

#[test]
fn oracle_matches_closed_form() {
    let f = worked();
    let out = run(&["oracle", "--pool", s(&f.pool), "--prices", s(&f.prices), "--grid-points", "2001"]);
    assert_eq!(out.status.code(), Some(0));
    let exact = 100.0 * (2.1 - 2.0 * 1.1f64.sqrt());
    assert!((json(&out)["profit"].as_f64().unwrap() - exact).abs() / exact < 1e-4);
}

#[test]
fn trials_are_reproducible_and_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = run(&["trials", "--n-trials", "40", "--seed", "5", "--out-dir", s(d)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(a.join("trials_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_trials"].as_u64(), Some(40));
    // timing columns differ run to run; everything else must match
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                [&f[..4], &f[6..]].concat().join(",")
            })
            .collect()
    };
    assert_eq!(strip(&a.join("trials.csv")), strip(&b.join("trials.csv")));
    assert_eq!(strip(&a.join("trials.csv")).len(), 41);
}

#[test]
fn trials_reject_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["trials", "--n-trials", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_trials"));
}

#[test]
fn duel_on_constant_series_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let csv: String = std::iter::once("timestamp,a,b,c".to_string())
        .chain((0..25).map(|t| format!("{t},1.0,2.0,0.5")))
        .collect::<Vec<_>>()
        .join("\n");
    let series = write(dir.path(), "series.csv", &csv);
    let out_dir = dir.path().join("out");
    let out = run(&["duel", "--series", s(&series), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("duel_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["duel"]["final_closed_form_profit"].as_f64(), Some(0.0));
    assert_eq!(summary["duel"]["final_baseline_profit"].as_f64(), Some(0.0));
    let rows = std::fs::read_to_string(out_dir.join("duel.csv")).unwrap();
    assert_eq!(rows.lines().count(), 26);
}

#[test]
fn duel_rejects_bad_series() {
    let dir = tempfile::tempdir().unwrap();
    let series = write(dir.path(), "series.csv", "timestamp,a,b\n1,1.0,2.0\n2,-1.0,2.0\n");
    let out = run(&["duel", "--series", s(&series), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn synthetic_duel_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for name in ["x", "y"] {
        let d = dir.path().join(name);
        let out = run(&["duel", "--steps", "300", "--seed", "9", "--out-dir", s(&d)]);
        assert_eq!(out.status.code(), Some(0));
        csvs.push(std::fs::read(d.join("duel.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "bench", "--n-min", "2", "--n-max", "3", "--instances", "30", "--threads", "1", "--repeats", "1", "--method",
        "closed", "--out-dir", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    let out = run(&["bench", "--instances", "5", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}
