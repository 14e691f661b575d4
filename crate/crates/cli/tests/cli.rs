//! End-to-end tests spawning the real binary: pipelines, exit codes,
//! config-file precedence, and byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ladderfolio::backtest::BacktestConfig;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ladderfolio"));
    // Tests control the config file explicitly; an ambient one must not leak in.
    cmd.env_remove("LADDERFOLIO_CONFIG");
    cmd
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_expecting(args: &[&str], code: i32) -> Output {
    let out = bin().args(args).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(code),
        "command {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates a small history and returns (dir, prices.csv path, cpi.csv path).
fn synth_into(dir: &Path, stocks: u32, years: u32, seed: u64) -> (String, String) {
    let out = dir.to_str().unwrap();
    run_ok(&[
        "synth", "--out", out, "--stocks", &stocks.to_string(), "--years", &years.to_string(),
        "--seed", &seed.to_string(),
    ]);
    (format!("{out}/prices.csv"), format!("{out}/cpi.csv"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

// ==================== Pipelines ====================

#[test]
fn synth_backtest_metrics_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 6, 2, 7);

    let run_dir = tmp.path().join("run");
    run_ok(&[
        "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "sqrt", "--rebalance",
        "monthly", "--out", run_dir.to_str().unwrap(),
    ]);
    for name in ["report.json", "values.csv", "returns.csv", "fees.csv"] {
        assert!(run_dir.join(name).exists(), "{name} missing");
    }
    let report = read_json(&run_dir.join("report.json"));
    assert_eq!(report["bankrupt"], false);
    assert!(report["final_value"].as_f64().unwrap() > 0.0);

    let metrics_dir = tmp.path().join("metrics");
    run_ok(&[
        "metrics", "--data", run_dir.join("returns.csv").to_str().unwrap(), "--out",
        metrics_dir.to_str().unwrap(),
    ]);
    let metrics = read_json(&metrics_dir.join("metrics.json"));

    // Recompute the Sharpe ratio by hand from the returns file: compound
    // daily returns into calendar years, then (mean - 0.0175) / sd.
    let returns_text = fs::read_to_string(run_dir.join("returns.csv")).unwrap();
    let mut by_year: Vec<(i32, f64)> = Vec::new();
    for line in returns_text.lines().skip(1) {
        let (date, value) = line.split_once(',').unwrap();
        let year: i32 = date[..4].parse().unwrap();
        let r: f64 = value.parse().unwrap();
        match by_year.last_mut() {
            Some((y, acc)) if *y == year => *acc *= 1.0 + r,
            _ => by_year.push((year, 1.0 + r)),
        }
    }
    let annual: Vec<f64> = by_year.iter().map(|(_, acc)| acc - 1.0).collect();
    let mean = annual.iter().sum::<f64>() / annual.len() as f64;
    let sd = (annual.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
        / (annual.len() as f64 - 1.0))
        .sqrt();
    let sharpe = (mean - 0.0175) / sd;
    let reported = metrics["sharpe"].as_f64().unwrap();
    assert!(
        (reported - sharpe).abs() < 1e-9,
        "metrics.json sharpe {reported} vs recomputed {sharpe}"
    );
}

#[test]
fn bootstrap_pipeline_writes_draws_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, _) = synth_into(&tmp.path().join("data"), 8, 1, 3);

    let out = tmp.path().join("boot");
    run_ok(&[
        "bootstrap", "--data", &prices, "--out", out.to_str().unwrap(), "--transform", "equal",
        "--n-mode", "fixed:4", "--iterations", "200", "--seed", "11",
    ]);
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().next(), Some("iteration,cumulative_return"));
    assert_eq!(draws.lines().count(), 201);

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["iterations"], 200);
    assert_eq!(summary["config"]["n_mode"], "fixed:4");
    assert_eq!(summary["config"]["transform"], "equal");
    assert_eq!(summary["config"]["master_seed"], 11);
    let (q5, q95) = (summary["q5"].as_f64().unwrap(), summary["q95"].as_f64().unwrap());
    assert!(q5 <= q95);
}

#[test]
fn transform_all_fans_out_into_eight_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 2);

    let out = tmp.path().join("fan");
    run_ok(&[
        "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "all", "--rebalance",
        "quarterly", "--out", out.to_str().unwrap(),
    ]);
    let names = ["inv-square", "inv", "inv-sqrt", "log", "sqrt", "identity", "square", "equal"];
    for name in names {
        let report = out.join(name).join("report.json");
        assert!(report.exists(), "missing {}", report.display());
        assert_eq!(read_json(&report)["config"]["transform"], name);
    }
    assert_eq!(fs::read_dir(&out).unwrap().count(), names.len());
}

// ==================== Determinism ====================

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 13);

    // The generator itself: same seed, same bytes.
    synth_into(&tmp.path().join("data2"), 5, 1, 13);
    assert_eq!(
        fs::read(&prices).unwrap(),
        fs::read(tmp.path().join("data2/prices.csv")).unwrap()
    );

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&[
            "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "inv", "--rebalance",
            "daily", "--out", dir.to_str().unwrap(),
        ]);
    }
    for name in ["report.json", "values.csv", "returns.csv", "fees.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn worker_count_does_not_change_bootstrap_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, _) = synth_into(&tmp.path().join("data"), 8, 1, 5);

    let (a, b) = (tmp.path().join("w1"), tmp.path().join("w4"));
    for (dir, workers) in [(&a, "1"), (&b, "4")] {
        run_ok(&[
            "bootstrap", "--data", &prices, "--out", dir.to_str().unwrap(), "--transform",
            "sqrt", "--n-mode", "uniform:2-6", "--iterations", "300", "--seed", "17",
            "--workers", workers,
        ]);
    }
    assert_eq!(
        fs::read(a.join("draws.csv")).unwrap(),
        fs::read(b.join("draws.csv")).unwrap(),
        "draws.csv depends on worker count"
    );
}

// ==================== Config round-trip ====================

#[test]
fn report_config_reparses_to_an_equal_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 29);

    let out = tmp.path().join("run");
    run_ok(&[
        "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "log", "--rebalance",
        "annual", "--initial", "250000", "--out", out.to_str().unwrap(),
    ]);
    let echoed = read_json(&out.join("report.json"))["config"].clone();
    let parsed: BacktestConfig = serde_json::from_value(echoed.clone()).unwrap();
    let reparsed: BacktestConfig =
        serde_json::from_value(serde_json::to_value(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, reparsed);
    assert_eq!(echoed["transform"], "log");
    assert_eq!(echoed["initial_capital"], 250000.0);
    assert_eq!(echoed["policy"]["frequency"], "annual");
}

// ==================== Config file and environment ====================

#[test]
fn env_named_config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 31);

    let out_cfg = tmp.path().join("from-config");
    let config = tmp.path().join("ladderfolio.conf");
    fs::write(
        &config,
        format!(
            "data={prices}\ncpi={cpi}\nout={}\ntransform=log\nrebalance=annual\n",
            out_cfg.display()
        ),
    )
    .unwrap();

    let status = bin()
        .args(["backtest"])
        .env("LADDERFOLIO_CONFIG", &config)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read_json(&out_cfg.join("report.json"))["config"]["transform"], "log");

    // A flag on top of the same config file takes precedence.
    let out_flag = tmp.path().join("from-flag");
    let status = bin()
        .args(["backtest", "--transform", "equal", "--out", out_flag.to_str().unwrap()])
        .env("LADDERFOLIO_CONFIG", &config)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read_json(&out_flag.join("report.json"))["config"]["transform"], "equal");
}

// ==================== Exit codes ====================

#[test]
fn usage_errors_exit_2() {
    let out = run_expecting(&["backtest", "--bogus"], 2);
    assert!(stderr_of(&out).contains("--bogus"));

    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 1);
    let out = run_expecting(
        &[
            "backtest", "--data", &prices, "--cpi", &cpi, "--out", "x", "--transform", "1/x^2",
        ],
        2,
    );
    assert!(stderr_of(&out).contains("did you mean 'inv-square'?"), "{}", stderr_of(&out));

    run_expecting(&["metrics", "--out", "x"], 2);

    // Semantically impossible parameters are usage errors too.
    let out_dir = tmp.path().join("never");
    run_expecting(
        &[
            "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "log", "--out",
            out_dir.to_str().unwrap(), "--start", "2015-12-31", "--end", "2015-01-02",
        ],
        2,
    );
    assert!(!out_dir.exists());
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    run_expecting(
        &[
            "backtest", "--data", "/nonexistent/prices.csv", "--cpi", "/nonexistent/cpi.csv",
            "--transform", "log", "--out", tmp.path().join("o").to_str().unwrap(),
        ],
        3,
    );

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "not,a,valid,header\n1,2,3,4\n").unwrap();
    run_expecting(
        &[
            "bootstrap", "--data", bad.to_str().unwrap(), "--transform", "log", "--out",
            tmp.path().join("o2").to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn runtime_errors_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 9);

    // Output path collides with an existing file: artifacts cannot be written.
    let blocker = tmp.path().join("blocked");
    fs::write(&blocker, "in the way").unwrap();
    run_expecting(
        &[
            "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "log", "--out",
            blocker.join("sub").to_str().unwrap(),
        ],
        4,
    );
}

#[test]
fn bankruptcy_is_a_valid_result_not_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (prices, cpi) = synth_into(&tmp.path().join("data"), 5, 1, 21);

    let out = tmp.path().join("broke");
    run_ok(&[
        "backtest", "--data", &prices, "--cpi", &cpi, "--transform", "equal", "--rebalance",
        "daily", "--initial", "1000", "--admin-fee", "1000000", "--out", out.to_str().unwrap(),
    ]);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["bankrupt"], true);
    assert_eq!(report["final_value"], 0.0);
}
