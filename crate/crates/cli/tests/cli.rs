use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adalb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adalb"))
        .args(args)
        .env_remove("ADALB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn only_json(dir: &Path) -> Value {
    let f = files(dir).into_iter().find(|p| p.extension().is_some_and(|e| e == "json")).expect("a json report");
    serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap()
}

const PAIR: [&str; 10] = ["--d", "1", "--beta", "0.4", "--r", "2", "--q", "inf", "--beta-prime", "0.45"];

#[test]
fn rate_prints_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = adalb(&["rate", "--d", "1", "--beta", "0.4", "--r", "2", "--q", "inf", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["z"].as_f64().unwrap() - 4.0 / 9.0).abs() < 1e-15);
    assert_eq!(v["regime"], "ThetaPrime");
}

#[test]
fn negative_r_names_constraint() {
    let out = adalb(&["rate", "--d", "1", "--beta", "0.4", "--r", "-1", "--q", "inf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r >= 1"));
}

#[test]
fn malformed_list_entry_is_located() {
    let out = adalb(&["rate", "--d", "2", "--beta", "0.4,abc", "--r", "2", "--q", "inf"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--beta") && err.contains("entry 2"), "{err}");
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"theta": {"d": 1, "beta": [0.4], "r": [2], "q": "inf", "L": [1], "Q": 1}, "n": 500}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = adalb(&["rate", "--config", cfg.to_str().unwrap(), "--n", "10000", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = only_json(&out_dir);
    assert_eq!(v["config"]["n"], 10000);
    assert_eq!(v["report"]["n"], 10000);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"theta": {"d": 1, "beta": [0.4], "r": [2], "q": "inf", "L": [1], "Q": 1}, "bogus": 1}"#).unwrap();
    let out = adalb(&["rate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn stochastic_command_requires_seed() {
    let mut args = vec!["simulate"];
    args.extend(PAIR);
    args.extend(["--n-grid", "1000", "--reps", "5"]);
    let out = adalb(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn missing_field_is_named() {
    let out = adalb(&["certify", "--d", "1", "--beta", "0.4", "--r", "2", "--q", "inf", "--n", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta_prime"));
}

#[test]
fn certify_embeds_named_constants_with_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["certify"];
    args.extend(PAIR);
    args.extend(["--n", "1000000", "--out-dir", dir.path().to_str().unwrap()]);
    let out = adalb(&args);
    assert_eq!(out.status.code(), Some(0));
    let v = only_json(dir.path());
    let named = v["constants"]["named"].as_array().unwrap();
    let find = |name: &str| named.iter().find(|c| c["name"] == name).unwrap().clone();
    let mass = find("class_mass");
    assert!((mass["value"].as_f64().unwrap() - 230.0 / 231.0).abs() < 1e-15);
    assert!(mass["anchor"].as_str().unwrap().contains("230/231"));
    let asym = find("asymptotic_certificate");
    assert!((asym["value"].as_f64().unwrap() - 107.0 / (144.0 * std::f64::consts::E)).abs() < 1e-15);
    assert!(asym["anchor"].as_str().unwrap().contains("107/(144e)"));
    assert!(v["report"]["certificate"]["final_bound"].as_f64().unwrap() >= 0.3);
    assert_eq!(v["provenance"]["certificate.final_bound"], "closed-form");
}

#[test]
fn failed_certificate_exits_one() {
    // The sparse-zone family with a large delta blows the chi-square budget.
    let dir = tempfile::tempdir().unwrap();
    let out = adalb(&[
        "certify", "--d", "1", "--beta", "0.5", "--r", "1", "--q", "4", "--l", "2.5", "--beta-prime", "0.6", "--n", "1000000",
        "--kappa", "0.03", "--delta", "1", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(only_json(dir.path())["status"], "check-failed");
}

#[test]
fn sweep_writes_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep"];
    args.extend(PAIR);
    args.extend(["--n-grid", "1000,10000,100000", "--out-dir", dir.path().to_str().unwrap()]);
    let out = adalb(&args);
    assert_eq!(out.status.code(), Some(0));
    for suffix in ["-rate.csv", "-ratio.csv"] {
        let f = files(dir.path()).into_iter().find(|p| p.to_str().unwrap().ends_with(suffix)).unwrap();
        let text = std::fs::read_to_string(f).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 1 + 3, "{text}");
        assert!(text.starts_with("# config: "));
    }
}

fn run_twice(args: &[&str]) {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut v = args.to_vec();
        v.extend(["--out-dir", d.path().to_str().unwrap()]);
        let out = adalb(&v);
        assert!(matches!(out.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa.iter().map(|p| p.file_name()).collect::<Vec<_>>(), fb.iter().map(|p| p.file_name()).collect::<Vec<_>>());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn simulate_is_deterministic() {
    let mut args = vec!["simulate"];
    args.extend(PAIR);
    args.extend(["--n-grid", "1000", "--reps", "10", "--seed", "17", "--h-count", "3"]);
    run_twice(&args);
    args.extend(["--format", "csv"]);
    run_twice(&args);
}

#[test]
fn lemmas_and_verify_are_deterministic() {
    run_twice(&["lemmas", "--seed", "4", "--wjk-cases", "4", "--wjk-reps", "2000", "--sandwich-draws", "10", "--sandwich-grid", "500"]);
    run_twice(&["verify", "--family", "nonneg", "--n", "100", "--seed", "8", "--y-mc", "100"]);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adalb"))
        .args(["rate", "--d", "1", "--beta", "0.4", "--r", "2", "--q", "inf"])
        .env("ADALB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(files(dir.path()).len(), 1);
}
