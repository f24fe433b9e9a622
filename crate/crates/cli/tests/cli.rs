use std::path::Path;
use std::process::{Command, Output};

use lpr_cli::manifest::RunManifest;
use tempfile::TempDir;

fn lpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpr"))
        .args(args)
        .env_remove("LPR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = lpr(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&lpr(&["--help"])), 0);
    let o = lpr(&["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("lpr "));
}

#[test]
fn system_selection_is_required_and_exclusive() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&lpr(&["simulate", "--out", &out_arg(&dir)])), 2);
    let o = lpr(&["simulate", "--system", "so2_planar", "--config", "x.toml", "--out", &out_arg(&dir)]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&lpr(&["simulate", "--system", "so3", "--out", &out_arg(&dir)])), 2);
}

#[test]
fn verify_so2_passes_and_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let o = lpr(&["verify", "--system", "so2_planar", "--seed", "7", "--out", &out_arg(dir)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(stdout.matches("PASS").count(), 10);
    }
    let ra = std::fs::read(a.path().join("verify_report.json")).unwrap();
    let rb = std::fs::read(b.path().join("verify_report.json")).unwrap();
    assert_eq!(ra, rb);

    let m = RunManifest::read(a.path()).unwrap();
    assert_eq!(m.command, "verify");
    assert_eq!(m.seed, Some(7));
    assert!(m.passed);
    assert!(m.error.is_none());
    assert_eq!(m.tolerances.projector, 1e-10);
    assert!(m.checks.iter().any(|c| c.name == "variational_relations" && c.passed));
    assert!(m.config.initial.is_some());
}

#[test]
fn compare_su2_within_bound() {
    let dir = TempDir::new().unwrap();
    let o = lpr(&[
        "compare",
        "--system",
        "su2_quaternion",
        "--dt",
        "1e-3",
        "--steps",
        "1000",
        "--out",
        &out_arg(&dir),
    ]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sup-norm deviation"));
    let r = json(&dir.path().join("comparison.json"));
    assert!(r["max_deviation"].as_f64().unwrap() <= 1e-5);
    assert_eq!(r["deviation"]["samples"].as_u64().unwrap(), 1001);
}

#[test]
fn simulate_writes_csv_and_echoes_initial_state() {
    let dir = TempDir::new().unwrap();
    let o = lpr(&[
        "simulate",
        "--system",
        "so2_planar",
        "--mode",
        "reduced",
        "--steps",
        "20",
        "--q",
        "1.2,-0.4",
        "--f-dot",
        "0.1,0.2",
        "--out",
        &out_arg(&dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 22);
    assert!(lines[0].starts_with("t,q_star_1,q_star_2,f_tilde_1,f_tilde_2,a_1,omega_A_1"));
    assert!(lines[0].ends_with("energy,slice_residual,slice_drift,momentum_1,implicit_residual"));

    let m = RunManifest::read(dir.path()).unwrap();
    let init = m.config.initial.unwrap();
    assert_eq!(init.q, vec![1.2, -0.4]);
    assert_eq!(init.f_dot, vec![0.1, 0.2]);
    assert_eq!(m.settings.steps, Some(20));
    assert_eq!(m.outputs, vec!["trajectory.csv".to_string()]);
}

#[test]
fn tolerance_breach_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = lpr(&[
        "verify",
        "--system",
        "so2_planar",
        "--check",
        "projector_algebra",
        "--tol-scale",
        "1e-12",
        "--out",
        &out_arg(&dir),
    ]);
    assert_eq!(code(&o), 1);
    let m = RunManifest::read(dir.path()).unwrap();
    assert!(!m.passed);
    assert_eq!(m.tolerances.projector, 1e-22);
}

#[test]
fn numerical_failure_exits_three_and_still_writes_manifest() {
    let dir = TempDir::new().unwrap();
    let o = lpr(&["simulate", "--system", "so2_planar", "--q", "0,0", "--out", &out_arg(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(!o.stderr.is_empty());
    let m = RunManifest::read(dir.path()).unwrap();
    assert!(!m.passed);
    assert!(m.error.is_some());
}

#[test]
fn bad_configs_exit_two() {
    let dir = TempDir::new().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let out = out_arg(&dir);
    let non_invariant = write(
        "bad.toml",
        "system = \"so2_planar\"\n[potential]\nexpression = \"q1\"\n",
    );
    let o = lpr(&["simulate", "--config", &non_invariant, "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("potential invariance"));

    let unknown_key = write("unknown.toml", "system = \"so2_planar\"\nwibble = 3\n");
    assert_eq!(code(&lpr(&["simulate", "--config", &unknown_key, "--out", &out])), 2);
    assert_eq!(code(&lpr(&["simulate", "--config", "/nonexistent.toml", "--out", &out])), 2);
    assert_eq!(code(&lpr(&["simulate", "--system", "so2_planar", "--dt", "-1", "--out", &out])), 2);
    assert_eq!(code(&lpr(&["verify", "--system", "so2_planar", "--tol-scale", "0", "--out", &out])), 2);
}

#[test]
fn config_with_expression_potential_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("planar.toml");
    std::fs::write(
        &cfg,
        r#"system = "so2_planar"

[parameters]
metric_conformal = 0.1

[potential]
expression = "0.5 * k * (q1^2 + q2^2) + kappa * (q1*f1 + q2*f2)"
parameters = { k = 2.0 }

[initial]
q = [1.0, 0.2]
f = [0.3, 0.1]
q_dot = [0.0, 0.5]
f_dot = [0.2, -0.1]
"#,
    )
    .unwrap();
    let o = lpr(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "200",
        "--out",
        &out_arg(&dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(dir.path()).unwrap();
    assert_eq!(m.config.parameters.metric_conformal, 0.1);
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lpr"))
        .args(["inspect", "--system", "su2_quaternion", "--format", "text"])
        .env("LPR_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("c_alpha_pq: [[[")));
    let r = json(&dir.path().join("inspect.json"));
    assert_eq!(r["dims"], serde_json::json!([4, 4, 3]));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn inspect_rejects_group_coordinates_outside_chart() {
    let dir = TempDir::new().unwrap();
    let o = lpr(&["inspect", "--system", "so2_planar", "--a", "4.0", "--out", &out_arg(&dir)]);
    assert_eq!(code(&o), 2);
}
