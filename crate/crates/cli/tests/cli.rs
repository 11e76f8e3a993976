use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ldeconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldeconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn green_critical_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("green.csv");
    let out = ldeconv(&["green", "--dim", "3", "--mu", "1", "--radius", "32", "--grid", "128", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    let ratio = summary["amplitude_ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    let exponent = summary["asymptotics"]["fitted_exponent"].as_f64().unwrap();
    assert!((exponent - 1.0).abs() < 0.05);

    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,x3,norm,C,asymptote,scaled_residual");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("green.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["grid"]["M"], 128);
    assert_eq!(manifest["box"], 32);
}

#[test]
fn green_rejects_two_dimensions() {
    let out = ldeconv(&["green", "--dim", "2", "--radius", "8"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("d > 2 required"));
}

#[test]
fn green_walk_agrees_with_torus_inverse() {
    let out = ldeconv(&["green", "--dim", "3", "--mu", "0.5", "--method", "walk", "--radius", "8", "--n-max", "80"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cross = &stdout_json(&out)["cross_method"];
    assert!(cross["max_delta"].as_f64().unwrap() <= cross["tail_bound"].as_f64().unwrap() + 1e-10);
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&ldeconv(&["green"])), 2);
    assert_eq!(code(&ldeconv(&["no-such-command"])), 2);
    assert_eq!(code(&ldeconv(&["exponents"])), 2);
}

#[test]
fn deconv_trivial_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("trivial_d3.json");
    let out = ldeconv(&["deconv", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert!(result["f_sup"].as_f64().unwrap() <= 1e-12);
    assert_eq!(result["constants"]["lambda"], 1.0);
    assert!(result["torus_identity"]["max_residual"].as_f64().unwrap() <= 1e-11);
    for name in ["G.csv", "f.csv", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "deconv");
    assert_eq!(manifest["config"]["d"], 3);
}

#[test]
fn deconv_doubling_reports_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("trivial_d3.json");
    let out = ldeconv(&["deconv", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--doubling"]);
    assert_eq!(code(&out), 0);
    let deltas = &stdout_json(&out)["doubling_deltas"];
    assert!(deltas["G_scaled_at_third"].as_f64().unwrap() > 0.0);
}

#[test]
fn deconv_rejects_rho_below_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("low_rho.json");
    fs::write(&cfg, r#"{"model":"srw","d":12,"rho":0.1,"R":4,"M":16}"#).unwrap();
    let out = ldeconv(&["deconv", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho = 0.1 outside the admissible range"));
}

#[test]
fn exponent_calculator() {
    let out = ldeconv(&["exponents", "--table"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("percolation,11,d-6,11,5,2,1,10,11"));

    let out = ldeconv(&["exponents", "--dim", "5", "--rho", "2"]);
    let budget = stdout_json(&out);
    assert_eq!(budget["s_sup"], "2");
    assert_eq!(budget["n_d"], 4);

    let out = ldeconv(&["exponents", "--dim", "9", "--rho", "0.4"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho = 2/5"));
}

#[test]
fn cdelta_prints_constant() {
    let out = ldeconv(&["cdelta", "--delta", "0.5"]);
    assert_eq!(code(&out), 0);
    let c: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((c - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);
    assert_eq!(code(&ldeconv(&["cdelta", "--delta", "1"])), 2);
}

#[test]
fn verify_assumptions_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, r#"{"kind":"perturbed","d":3,"rho":0.5,"epsilon":0.02,"tail_radius":8}"#).unwrap();
    let out = ldeconv(&["verify-assumptions", "--model", good.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["verdict"]["pass"], true);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"kind":"perturbed","d":3,"rho":0.5,"epsilon":50,"tail_radius":8}"#).unwrap();
    let out = ldeconv(&["verify-assumptions", "--model", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let report = stdout_json(&out);
    assert_eq!(report["verdict"]["pass"], false);
    assert!(report["infrared"]["K2_est"].as_f64().unwrap() < 0.0);
}

#[test]
fn fracnorm_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let cfg = config("synthetic_d3_rho05.json");
    let out = ldeconv(&[
        "fracnorm", "--model", cfg.to_str().unwrap(), "--field", "kernel", "--alpha", "1,0,0", "--u-max", "0.5",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u,norm,ratio"));
    let norms: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(norms.len() >= 4);
    assert!(norms.windows(2).all(|w| w[0] <= w[1]), "nonincreasing as u decreases");
    assert!(stdout_json(&out)["fitted_eta"].as_f64().unwrap() >= 0.5);

    let out = ldeconv(&["fracnorm", "--model", cfg.to_str().unwrap(), "--alpha", "1,0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn memory_guard_refuses_large_grids() {
    let out = ldeconv(&["green", "--dim", "5", "--radius", "64", "--grid", "256"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("raise --max-cells"));
    let out = ldeconv(&["--max-cells", "1000", "green", "--dim", "3", "--radius", "8", "--grid", "32"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let csv = dir.path().join(format!("g{threads}.csv"));
        let out = ldeconv(&[
            "--threads", threads, "green", "--dim", "3", "--radius", "16", "--grid", "64", "--out", csv.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        (out.stdout, fs::read(csv).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}
