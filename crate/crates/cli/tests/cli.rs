use std::process::{Command, Output};

use bellstrength::json::{proof_from_json, proof_to_json, ProofDoc};
use bellstrength::quantum::catalog;
use bellstrength::{LocalTheory, NonlocalityProof, Scenario};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellstrength"))
        .args(args)
        .env_remove("BELLSTRENGTH_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn strengths(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r["strength_bits"].as_f64().unwrap())
        .collect()
}

#[test]
fn export_round_trips() {
    for name in ["chsh", "mermin", "ghz"] {
        let out = run(&["export-proof", name]);
        assert!(out.status.success());
        let back = proof_from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        let orig = catalog(name).unwrap();
        for (a, b) in back.tables().iter().zip(orig.tables()) {
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn chsh_all_modes() {
    let v = json(&run(&["strength", "chsh", "--mode", "all", "--json"]));
    let s = strengths(&v);
    assert_eq!(s.len(), 3);
    for x in s {
        assert!((x - 0.0462738469).abs() < 1e-9, "{x}");
    }
}

#[test]
fn ghz_correlated() {
    let v = json(&run(&["strength", "ghz", "--mode", "correlated", "--json"]));
    assert!((strengths(&v)[0] - 0.4150374993).abs() < 1e-9);
}

#[test]
fn table_output_has_ten_decimals() {
    let out = run(&["strength", "hardy", "--mode", "uniform", "--table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.0278585182 bits"), "{text}");
    assert!(text.contains("best classical theory"));
}

#[test]
fn improper_proof_has_zero_strength() {
    let sc = Scenario::uniform(2, 2, 2).unwrap();
    let pi = LocalTheory::new((1..=16).map(|i| i as f64 / 136.0).collect()).unwrap();
    let proof = NonlocalityProof::from_local_theory("local", &sc, &pi).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("local.json");
    std::fs::write(&path, proof_to_json(&proof).unwrap()).unwrap();
    let v = json(&run(&[
        "strength",
        path.to_str().unwrap(),
        "--mode",
        "uniform",
        "--json",
    ]));
    assert!(strengths(&v)[0].abs() < 1e-9);
    let weights = v[0]["pi_star"]["weights"].as_array().unwrap();
    assert_eq!(weights.len(), 16);
}

#[test]
fn verify_single_row() {
    let out = run(&["verify-paper-table", "--proof", "hardy", "--json"]);
    let v = json(&out);
    let cells = v.as_array().unwrap();
    assert_eq!(cells.len(), 3);
    for (cell, want) in cells.iter().zip([0.0278585182, 0.0279816333, 0.0280347655]) {
        assert!((cell["computed"].as_f64().unwrap() - want).abs() < 1e-7);
        assert_eq!(cell["pass"], true);
    }
    let strict = run(&["verify-paper-table", "--proof", "hardy", "--tol", "1e-14"]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("hardy"));
}

#[test]
fn decompose_three_settings() {
    let proof = catalog("chsh").unwrap();
    let mut doc = ProofDoc::from_proof(&proof);
    doc.tables.remove(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gamma.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let v = json(&run(&["decompose", path.to_str().unwrap()]));
    assert!(v["reconstruction_error"].as_f64().unwrap() <= 1e-9);
    let total: f64 = v["theory"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "chsh", "-n", "20000", "--seed", "11"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["n"], 20000);
    let uniform = json(&run(&[
        "simulate",
        "chsh",
        "-n",
        "1000",
        "--against",
        "uniform-lr",
    ]));
    assert!(uniform["per_trial_mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn thread_cap_does_not_change_results() {
    let args = ["simulate", "hardy", "-n", "200000", "--seed", "3"];
    let free = run(&args);
    let capped = Command::new(env!("CARGO_BIN_EXE_bellstrength"))
        .args(args)
        .env("BELLSTRENGTH_THREADS", "1")
        .output()
        .unwrap();
    assert!(capped.status.success());
    assert_eq!(free.stdout, capped.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_bellstrength"))
        .args(args)
        .env("BELLSTRENGTH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn project_emits_result() {
    let v = json(&run(&["project", "chsh", "--sigma", "0.5,0.5/0.5,0.5"]));
    assert!((v["value"].as_f64().unwrap() - 0.0462738469).abs() < 1e-9);
    assert!(v["kkt_residual"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn violation_report_json() {
    let v = json(&run(&["violation-report", "ghz", "--json"]));
    assert!((v["slack"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn input_errors_exit_one() {
    for args in [
        &["strength", "no-such-proof"][..],
        &["project", "chsh", "--sigma", "0.9,0.9"],
        &["verify-paper-table", "--tol", "-1"],
        &["frobnicate"],
        &["decompose", "/nonexistent/gamma.json"],
    ] {
        assert_eq!(run(args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn csv_output_has_header_and_rows() {
    let out = run(&["strength", "chsh", "--mode", "all", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "proof,mode,strength_bits,kkt_residual,crosscheck_gap"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("chsh,correlated,0.046273846"));
    let out = run(&["violation-report", "hardy", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("inequality,statement,lhs,rhs,slack"),
        "{text}"
    );
}
