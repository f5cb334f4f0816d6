use std::path::Path;
use std::process::{Command, Output};

use dynprice::cnone::AggregateDemandModel;

fn dynprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynprice"))
        .args(args)
        .env_remove("DYNPRICE_CONFIG")
        .output()
        .expect("binary runs")
}

fn quick_config(dir: &Path) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, "seed = 3\n[ga]\npopulation = 20\ngenerations = 5\n").unwrap();
    path.display().to_string()
}

#[test]
fn help_on_every_subcommand() {
    for sub in ["fit-cnone", "gen-history", "run-case", "compare", "storage-study"] {
        let out = dynprice(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let out = dynprice(&["compare", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn generated_history_fits_to_a_valid_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let hist = dir.path().join("hist");
    let out = dynprice(&["gen-history", &cfg, "--days", "40", "--seed", "2", "--out", hist.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(hist.join("phev.csv").exists());

    let model_path = dir.path().join("model.json");
    let out = dynprice(&[
        "fit-cnone",
        hist.join("aggregate.csv").to_str().unwrap(),
        "--lambda",
        "1.0",
        "--pool",
        "100",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let model: AggregateDemandModel = serde_json::from_str(&std::fs::read_to_string(model_path).unwrap()).unwrap();
    model.check_invariants().unwrap();
}

#[test]
fn malformed_csv_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "date,slot,price_cents,demand_kwh\n2012-01-01,0,abc,1\n").unwrap();
    let out = dynprice(&["fit-cnone", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 1"));
}

#[test]
fn run_case_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let mut results = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = dynprice(&["run-case", &cfg, "--case", "1", "--seed", "7", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["result.json", "trace.csv", "prices.csv", "demand.csv"] {
            assert!(out_dir.join("case1").join(f).exists(), "{f}");
        }
        results.push(std::fs::read(out_dir.join("case1/result.json")).unwrap());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "forgetting = 3.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dynprice"))
        .args(["run-case", "--case", "1"])
        .env("DYNPRICE_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forgetting"));
}

#[test]
fn unknown_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dynprice(&["run-case", &cfg, "--case", "42"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_reports_ga_at_least_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, "seed = 5\n[ga]\npopulation = 40\ngenerations = 30\n").unwrap();
    let out = dynprice(&["compare", path.to_str().unwrap(), "--cases", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].trim_end().ends_with("true"), "{text}");
}
