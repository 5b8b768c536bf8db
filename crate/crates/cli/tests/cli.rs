use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftband::config::hash_bytes;
use serde_json::Value;
use tempfile::TempDir;

fn canonical() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftband"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Solve the canonical instance into a fresh directory.
fn solved() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let o = run(&["solve", arg(&canonical()), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = dir.path().join("solution.json");
    (dir, summary)
}

#[test]
fn solve_writes_summary_with_small_residuals() {
    let (dir, summary) = solved();
    let s = json(&summary);
    for r in ["r1", "r2", "r3", "r4", "r5"] {
        let v = s["residuals"][r].as_f64().unwrap();
        assert!(v.abs() <= 1e-6, "{r} = {v}");
    }
    for key in ["w0_star", "gamma_star", "q_star", "Q_star", "S_star", "x_star"] {
        assert!(s[key].is_f64(), "{key}");
    }
    assert!((s["gamma_star"].as_f64().unwrap() - 1.911_748_658).abs() < 1e-8);
    assert_eq!(s["tolerances"]["root"].as_f64(), Some(1e-9));
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,w_star,mu_star"));
    assert!(csv.lines().count() > 100);
}

#[test]
fn every_document_carries_the_config_hash() {
    let (dir, summary) = solved();
    let expected = hash_bytes(&fs::read(canonical()).unwrap());
    let cfg = canonical();
    let out = arg(dir.path());
    let sol = arg(&summary);
    assert_eq!(code(&run(&["eval", arg(&cfg), "--from-solution", sol, "--out-dir", out])), 0);
    assert_eq!(code(&run(&["verify", arg(&cfg), "--from-solution", sol, "--out-dir", out])), 0);
    let sim = ["simulate", arg(&cfg), "--from-solution", sol, "--out-dir", out];
    assert_eq!(code(&run(&[&sim[..], &["--replications", "2", "--horizon", "1100"]].concat())), 0);
    for name in ["solution.json", "eval.json", "verify.json", "simulate.json"] {
        let d = json(&dir.path().join(name));
        assert_eq!(d["config_hash"].as_str(), Some(expected.as_str()), "{name}");
        assert_eq!(d["tool"]["version"].as_str(), Some(env!("CARGO_PKG_VERSION")), "{name}");
    }
}

#[test]
fn eval_round_trip_reproduces_gamma_star() {
    let (dir, summary) = solved();
    let o = run(&["eval", arg(&canonical()), "--from-solution", arg(&summary), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gamma_star = json(&summary)["gamma_star"].as_f64().unwrap();
    let e = json(&dir.path().join("eval.json"));
    assert!((e["gamma"].as_f64().unwrap() - gamma_star).abs() < 1e-6);
    assert_eq!(e["reference_gamma"].as_f64(), Some(gamma_star));
}

#[test]
fn verify_rejects_hand_edited_gamma() {
    let (dir, summary) = solved();
    let o = run(&["verify", arg(&canonical()), "--from-solution", arg(&summary), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&dir.path().join("verify.json"))["passed"], Value::Bool(true));

    let mut s = json(&summary);
    s["gamma_star"] = Value::from(s["gamma_star"].as_f64().unwrap() + 0.1);
    let edited = dir.path().join("edited.json");
    fs::write(&edited, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    let o = run(&["verify", arg(&canonical()), "--from-solution", arg(&edited), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_rejects_small_edit_of_w0() {
    let (dir, summary) = solved();
    let mut s = json(&summary);
    s["w0_star"] = Value::from(s["w0_star"].as_f64().unwrap() + 1e-3);
    let edited = dir.path().join("edited.json");
    fs::write(&edited, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    let o = run(&["verify", arg(&canonical()), "--from-solution", arg(&edited), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&dir.path().join("verify.json"))["residuals_ok"], Value::Bool(false));
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let policy = "q=0.7,Q=1.25,S=3.1,mu=const:0";
    let mut docs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let o = run(&[
            "simulate",
            arg(&canonical()),
            "--policy",
            policy,
            "--seed",
            "11",
            "--replications",
            "5",
            "--horizon",
            "1500",
            "--trace",
            "--out-dir",
            arg(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        docs.push((fs::read(out.join("simulate.json")).unwrap(), fs::read(out.join("trace.csv")).unwrap()));
    }
    assert_eq!(docs[0], docs[1]);
    let trace = String::from_utf8(docs[0].1.clone()).unwrap();
    assert_eq!(trace.lines().next(), Some("t,x,mu,cumulative_cost"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(canonical()).unwrap();
    let cases = [
        ("missing.toml", text.replace("l = 0.5\n", ""), "costs"),
        ("negative.toml", text.replace("K = 1.0", "K = -1.0"), "costs.K"),
        ("syntax.toml", text.replace("sigma = 1.0", "sigma = = 1.0"), "line 2"),
        ("unknown.toml", text.replace("sigma = 1.0", "sigma = 1.0\nsigmaa = 2.0"), "sigmaa"),
    ];
    for (name, body, needle) in cases {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let o = run(&["solve", arg(&path), "--out-dir", arg(dir.path())]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(code(&o), 2, "{name}: {err}");
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = run(&["solve", arg(&dir.path().join("absent.toml"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_policy_or_missing_policy_exits_2() {
    let cfg = canonical();
    assert_eq!(code(&run(&["eval", arg(&cfg)])), 2);
    assert_eq!(code(&run(&["eval", arg(&cfg), "--policy", "q=0.7,Q=1.25"])), 2);
    assert_eq!(code(&run(&["eval", arg(&cfg), "--policy", "q=0.7,Q=1.25,S=3.1,mu=const:0.3"])), 2);
    assert_eq!(code(&run(&["eval", arg(&cfg), "--policy", "q=2,Q=1.25,S=3.1,mu=const:0"])), 2);
}

#[test]
fn strict_mode_rejects_coarse_time_step() {
    let dir = TempDir::new().unwrap();
    let cfg = canonical();
    let base = [
        "simulate",
        arg(&cfg),
        "--policy",
        "q=0.7,Q=1.25,S=3.1,mu=const:0",
        "--dt",
        "0.2",
        "--replications",
        "1",
        "--horizon",
        "2000",
        "--out-dir",
        arg(dir.path()),
    ];
    let o = run(&base);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert_eq!(code(&run(&[&base[..], &["--strict"]].concat())), 2);
}

#[test]
fn solver_failure_exits_3_with_trace() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(canonical()).unwrap() + "\n[solver]\nw0_floor = -1.0\n";
    let path = dir.path().join("floor.toml");
    fs::write(&path, text).unwrap();
    let o = run(&["solve", arg(&path), "--out-dir", arg(dir.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d(w0)"));
    let f = json(&dir.path().join("solve_failure.json"));
    assert!(!f["trace"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_reports_in_family_order() {
    let (dir, summary) = solved();
    let o = run(&[
        "sweep",
        arg(&canonical()),
        "--from-solution",
        arg(&summary),
        "--replications",
        "2",
        "--horizon",
        "1100",
        "--out-dir",
        arg(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&dir.path().join("sweep.json"));
    let rows = d["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 27);
    assert_eq!(rows[0]["dq"].as_f64(), Some(-0.05));
    assert_eq!(rows[26]["dS"].as_f64(), Some(0.05));
    assert_eq!(rows[13]["dq"].as_f64(), Some(0.0));
    let exact = rows[13]["gamma_exact"].as_f64().unwrap();
    assert!((exact - json(&summary)["gamma_star"].as_f64().unwrap()).abs() < 1e-6);
}
