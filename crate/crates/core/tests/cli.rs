mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use mdfm::io::{load_fit, read_json, save_fit, ParameterFile};
use mdfm::simulate::{default_truth, simulate, SimulationDesign};

fn mdfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdfm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = mdfm(args);
    assert!(out.status.success(), "mdfm {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn simulate_estimate_decompose_nowcast() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&study_config()).unwrap()).unwrap();
    let data = root.join("data");
    ok(&["simulate", "--config", &s(&cfg), "--seed", "3", "--periods", "30", "--households", "16", "--out", &s(&data)]);
    for f in ["macro.csv", "micro.csv", "calendar.csv", "truth.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let truth: serde_json::Value = read_json(data.join("truth.json")).unwrap();
    let params: ParameterFile = serde_json::from_value(truth["params"].clone()).unwrap();
    assert_eq!(params.to_params().unwrap(), default_truth(&study_config()));

    let fit = root.join("fit");
    let (m, u) = (s(&data.join("macro.csv")), s(&data.join("micro.csv")));
    ok(&["estimate", "--config", &s(&cfg), "--macro", &m, "--micro", &u, "--out", &s(&fit), "--max-iterations", "15"]);
    let trace = lines(&fit.join("trace.csv"));
    assert_eq!(trace[0], "iteration,objective,median_delta,q95_delta");
    assert_eq!(trace.len(), 1 + 16);
    let fitted = load_fit(fit.join("fit.json")).unwrap();
    assert_eq!(fitted.iterations, 15);

    let dec = root.join("dec");
    ok(&["decompose", "--model", &s(&fit.join("fit.json")), "--macro", &m, "--micro", &u, "--out", &s(&dec)]);
    let rows = lines(&dec.join("decomposition.csv"));
    assert_eq!(rows[0], "entity,time,observed,trend,common,idio,residual");
    assert_eq!(rows.len(), 1 + 30 * (3 + 2));
    let summary = lines(&dec.join("group_summary.csv"));
    assert!(summary[0].contains("mean") && summary[0].contains("q25") && summary[0].contains("q75"));
    assert_eq!(summary.len(), 1 + 30 * 2);

    let now = root.join("now");
    ok(&[
        "nowcast",
        "--model",
        &s(&fit.join("fit.json")),
        "--calendar",
        &s(&data.join("calendar.csv")),
        "--targets",
        "28,29,30",
        "--out",
        &s(&now),
    ]);
    let est = lines(&now.join("early_estimates.csv"));
    assert!(est.len() > 1);
    let header: Vec<&str> = est[0].split(',').collect();
    let col = header.iter().position(|h| *h == "ref_period").unwrap();
    for l in &est[1..] {
        let period: usize = l.split(',').nth(col).unwrap().parse().unwrap();
        assert!((28..=30).contains(&period));
    }
}

#[test]
fn fit_file_round_trips() {
    let cfg = study_config();
    let design = SimulationDesign {
        horizon: 15,
        group_sizes: vec![6, 6],
        rotation: 4,
        missing_rate: 0.0,
        seed: 1,
    };
    let sim = simulate(&cfg, &default_truth(&cfg), &design).unwrap();
    let mut c = cfg.clone();
    c.max_iterations = 3;
    let fitted = mdfm::estimate(&sim.panel, &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    save_fit(&path, &fitted).unwrap();
    let back = load_fit(&path).unwrap();
    assert_eq!(back.params, fitted.params);
    assert_eq!(back.config, fitted.config);
    assert_eq!(back.trace, fitted.trace);
    assert_eq!(back.iterations, fitted.iterations);
}

#[test]
fn missing_input_exits_with_module_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&study_config()).unwrap()).unwrap();
    let out = mdfm(&[
        "estimate",
        "--config",
        &s(&cfg),
        "--macro",
        &s(&dir.path().join("absent.csv")),
        "--out",
        &s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error in ecm::estimate"), "{err}");
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(mdfm(&["estimate"]).status.code(), Some(2));
    assert_eq!(mdfm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mdfm(&["--help"]).status.code(), Some(0));
}
