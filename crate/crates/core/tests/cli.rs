use std::fs;
use std::path::Path;
use std::process::Command;

use kseg::config::emit_document;
use kseg::fixtures::crossing_document;

fn kseg(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_kseg"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn small_config(dir: &Path) -> String {
    let mut doc = crossing_document(12);
    doc.traces.amplitude = Some(3.0);
    doc.schedule.betas = vec![1.0, 10.0, 100.0];
    doc.limit.as_mut().unwrap().penalty_schedule = vec![1.0, 10.0, 100.0];
    doc.blowup.as_mut().unwrap().half_width = 3;
    let path = dir.join("small.toml");
    fs::write(&path, emit_document(&doc).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn continue_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    assert_eq!(kseg(&["continue", "--config", &cfg, "--out", out_s]), 0);
    let csv = fs::read_to_string(out.join("continuation.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "beta,energy,interaction_scaled,holder_alpha03,holder_alpha06,seg_violation,h1_norm,sup_norm"
    );
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("plot/interaction_decay.dat").exists());
    assert!(out.join("effective_config.toml").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 0);
    assert!(summary["blowup"]["m_n"].as_f64().unwrap() > 0.0);
    assert_eq!(kseg(&["report", "--out", out_s]), 0);
}

#[test]
fn emit_selection_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(
        kseg(&[
            "continue",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--emit",
            "json"
        ]),
        0
    );
    assert!(out.join("summary.json").exists());
    assert!(!out.join("continuation.csv").exists());
    assert!(!out.join("plot").exists());
}

#[test]
fn limit_reports_both_routes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(kseg(&["limit", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let support = summary["beta_proxy"]["support"].as_str().unwrap();
    assert_eq!(support.len(), 2 * 12 * 12);
    assert!(hex::decode(support).is_ok());
    assert!(summary["penalty"]["c_infty"].as_f64().is_some());
    assert!(out.join("penalty.csv").exists());
}

#[test]
fn seed_flag_reaches_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(
        kseg(&[
            "minimize",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--beta",
            "5"
        ]),
        0
    );
    let eff = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(eff.contains("seed = 7"));
    assert!(out.join("iterations.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    // validation: k > d
    let bad = dir.path().join("bad.toml");
    let text = emit_document(&crossing_document(12)).unwrap().replace("k = 3", "k = 4");
    fs::write(&bad, text).unwrap();
    assert_eq!(
        kseg(&["continue", "--config", bad.to_str().unwrap(), "--out", out_s]),
        2
    );
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("3 ≤ k ≤ d"));
    // unknown field
    let typo = dir.path().join("typo.toml");
    fs::write(
        &typo,
        emit_document(&crossing_document(12))
            .unwrap()
            .replace("[schedule]", "[schedule]\nbetaz = 1"),
    )
    .unwrap();
    assert_eq!(
        kseg(&["continue", "--config", typo.to_str().unwrap(), "--out", out_s]),
        2
    );
    // missing file
    assert_eq!(
        kseg(&["continue", "--config", "/nonexistent/x.toml", "--out", out_s]),
        4
    );
    // non-convergence
    let cfg = small_config(dir.path());
    let tight = dir.path().join("tight.toml");
    fs::write(
        &tight,
        fs::read_to_string(&cfg)
            .unwrap()
            .replace("max_iters = 20000", "max_iters = 3"),
    )
    .unwrap();
    assert_eq!(
        kseg(&["minimize", "--config", tight.to_str().unwrap(), "--out", out_s]),
        3
    );
    assert_eq!(kseg(&["frobnicate"]), 2);
}

#[test]
fn alpha_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(kseg(&["alpha", "--k", "3", "--out", out.to_str().unwrap()]), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let nu = summary["threshold"]["nu_bar"].as_f64().unwrap();
    assert!((nu - 2.0 / 3.0).abs() < 1e-6);
    assert_eq!(kseg(&["alpha", "--k", "1", "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn pohozaev_on_linear_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(
        kseg(&[
            "pohozaev",
            "--field",
            "x1",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["report"]["residual"].as_f64().unwrap() < 1e-10);
}
