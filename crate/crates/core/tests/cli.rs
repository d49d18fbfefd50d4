use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsc-ptc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("DSC_PTC_JOBS").output().unwrap()
}

fn header(dir: &Path) -> String {
    fs::read_to_string(dir.join("trajectory.csv")).unwrap().lines().next().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_example1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--config", s(&config("example1.cfg")), "--horizon", "2", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(tmp.path()), "t,x1,r,z1,u,sigma1,sigma2,rho,e,theta_hat1");
    let m = json(&tmp.path().join("metrics.json"));
    let mut keys: Vec<_> = m.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["T", "dt", "e_at_T", "energy", "final_error", "horizon", "max_abs_u", "max_funnel_ratio", "sigma_bar", "status"]
    );
    assert_eq!(m["status"], "Completed");
    assert_eq!(m["horizon"], 2.0);
}

#[test]
fn simulate_example2_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--config", s(&config("example2.cfg")), "--horizon", "1", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(0));
    let h = header(tmp.path());
    let cols: Vec<_> = h.split(',').collect();
    for c in ["w1", "alpha1", "alpha_c1", "gamma_hat1", "xi1"] {
        assert!(cols.contains(&c), "{h}");
    }
}

#[test]
fn sigma_bar_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.cfg");
    let out = run(&["simulate", "--config", s(&cfg), "--sigma-bar", "30", "--horizon", "1", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&tmp.path().join("metrics.json"))["sigma_bar"], 30.0);
}

#[test]
fn missing_and_malformed_config() {
    let out = run(&["simulate", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    let text = fs::read_to_string(config("example1.cfg")).unwrap().replace("gains.rho0 = 3.0", "gains.rho0 = three");
    fs::write(&bad, text).unwrap();
    let out = run(&["simulate", "--config", s(&bad), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line"), "{err}");
}

#[test]
fn initial_funnel_violation_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.cfg");
    let text = fs::read_to_string(config("example1.cfg")).unwrap().replace("init.x0 = [2.0]", "init.x0 = [-3.2]");
    fs::write(&cfg, text).unwrap();
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&tmp.path().join("metrics.json"))["status"], "InitialFunnelViolation");
    assert!(json(&tmp.path().join("metrics.json"))["energy"].is_null());
}

#[test]
fn sweep_keeps_order_and_isolates_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep", "--config", s(&config("example1.cfg")), "--param", "rho_T", "--values", "0.2,5,0.1",
        "--horizon", "1", "--jobs", "2", "--out", s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let summary = json(&tmp.path().join("sweep_summary.json"));
    let entries = summary["entries"].as_array().unwrap();
    let statuses: Vec<_> = entries.iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["Completed", "ConfigError", "Completed"]);
    assert_eq!(entries[2]["value"], 0.1);
    assert!(tmp.path().join("rho_T_0.2/trajectory.csv").exists());
    assert!(tmp.path().join("rho_T_0.1/metrics.json").exists());
}

#[test]
fn sigma_sweep_energy_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--config", s(&config("example1.cfg")), "--param", "sigma_bar", "--values", "20,30,50,100"])
        .args(["--horizon", "2", "--out", s(tmp.path())])
        .env("DSC_PTC_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&tmp.path().join("sweep_summary.json"));
    assert_eq!(summary["param"], "sigma_bar");
    let values: Vec<f64> = summary["entries"].as_array().unwrap().iter().map(|e| e["value"].as_f64().unwrap()).collect();
    assert_eq!(values, [20.0, 30.0, 50.0, 100.0]);
    assert!(summary["entries"].as_array().unwrap().iter().all(|e| e["energy"].as_f64().unwrap() > 0.0));
}

#[test]
fn single_value_sweep_matches_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("example1.cfg");
    let a = tmp.path().join("sim");
    let b = tmp.path().join("sweep");
    assert_eq!(run(&["simulate", "--config", s(&cfg), "--sigma-bar", "50", "--horizon", "1", "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(
        run(&["sweep", "--config", s(&cfg), "--param", "sigma_bar", "--values", "50", "--horizon", "1", "--out", s(&b)]).status.code(),
        Some(0)
    );
    for f in ["trajectory.csv", "metrics.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join("sigma_bar_50").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_jobs_env_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--config", s(&config("example1.cfg")), "--param", "sigma_bar", "--values", "20"])
        .args(["--out", s(tmp.path())])
        .env("DSC_PTC_JOBS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_command() {
    let a = run(&["check", "--samples", "100000", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    let b = run(&["check", "--samples", "100000", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["violations"] == 0));
    assert_eq!(run(&["check", "--samples", "0"]).status.code(), Some(1));
}
