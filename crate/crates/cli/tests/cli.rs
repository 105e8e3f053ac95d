use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agebif::Termination;
use agebif_cli::{termination_exit_code, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_POSITIVITY, EXIT_STEP_FAILURE};

fn agebif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agebif")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn small_logistic(extra_continuation: &str) -> String {
    format!(
        r#"{{
  "model": {{ "n_x": 8, "n_a": 30,
             "coefficients": {{ "family": "logistic_death", "d0": 1, "mu0": 1, "kappa": 1, "b0": 1 }} }},
  "continuation": {{ "max_points": 12 {extra_continuation} }},
  "seed": 5
}}"#
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bifpoint_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{ "model": { "n_x": 16, "n_a": 400,
             "coefficients": { "family": "constant", "d0": 1, "mu0": 1, "b0": 1 } } }"#,
    );
    let out_dir = dir.path().join("out");
    let out = agebif(&["bifpoint", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out).lines().find(|l| l.starts_with("lambda0")).unwrap().to_string();
    let lambda0: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let exact = 1.0 / (1.0 - (-1.0f64).exp());
    assert!((lambda0 - exact).abs() / exact < 5e-3);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("eigenpair.json")).unwrap()).unwrap();
    assert_eq!(report["lambda0"].as_f64().unwrap(), lambda0);
    assert_eq!(report["simplicity"]["pass"], true);
    assert_eq!(report["phi"].as_array().unwrap().len(), 16);
}

#[test]
fn box_below_lambda0_gives_empty_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_logistic(r#", "lambda_max": { "relative": 0.9 }"#));
    let out_dir = dir.path().join("out");
    let out = agebif(&["continue", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_OK);
    let csv = fs::read_to_string(out_dir.join("branch.csv")).unwrap();
    assert_eq!(csv, "index,arclength,lambda,u_norm,min_u,r_Q_u,residual_norm\n");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("branch.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "box_lambda");
    assert_eq!(summary["points"], 0);
    assert!(summary["rejected"]["lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn configuration_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let malformed = write(dir.path(), "bad.json", "{ \"model\": { \"n_x\": 8,");
    let out = agebif(&["bifpoint", "--config", s(&malformed), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let unknown = write(dir.path(), "unknown.json", &small_logistic(r#", "lambda_min": 1.0"#));
    assert_eq!(code(&agebif(&["continue", "--config", s(&unknown), "--out", s(&out_dir)])), EXIT_CONFIG);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&agebif(&["oracle", "--config", s(&missing), "--out", s(&out_dir)])), EXIT_CONFIG);
    assert_eq!(code(&agebif(&["frobnicate"])), EXIT_CONFIG);
    assert_eq!(code(&agebif(&["--help"])), EXIT_OK);
}

#[test]
fn continuation_is_deterministic_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_logistic(""));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&agebif(&["continue", "--config", s(&cfg), "--out", s(&a), "--seed", "9"])), EXIT_OK);
    assert_eq!(code(&agebif(&["continue", "--config", s(&cfg), "--out", s(&b), "--seed", "9"])), EXIT_OK);
    let csv_a = fs::read(a.join("branch.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("branch.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("snapshots/point_00005.json")).unwrap(),
        fs::read(b.join("snapshots/point_00005.json")).unwrap()
    );
    assert_eq!(String::from_utf8_lossy(&csv_a).lines().count(), 13);

    let out = agebif(&["verify", "--out", s(&a)]);
    assert_eq!(code(&out), EXIT_OK, "{}", stdout(&out));
    assert!(stdout(&out).contains("verify pass (12 points)"));

    // A perturbed stored solution no longer verifies.
    let snap_path = a.join("snapshots/point_00003.json");
    let mut snap: serde_json::Value = serde_json::from_str(&fs::read_to_string(&snap_path).unwrap()).unwrap();
    let v0 = snap["v"][0].as_f64().unwrap();
    snap["v"][0] = serde_json::json!(v0 * 1.01);
    fs::write(&snap_path, serde_json::to_string(&snap).unwrap()).unwrap();
    let out = agebif(&["verify", "--out", s(&a)]);
    assert_eq!(code(&out), EXIT_NUMERICAL);
    assert!(stdout(&out).contains("MISMATCH"));
}

#[test]
fn newton_budget_exhaustion_is_a_step_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_logistic("").replace("\"seed\": 5", "\"tolerances\": { \"max_newton\": 1 }, \"seed\": 5");
    let cfg = write(dir.path(), "c.json", &text);
    let out_dir = dir.path().join("out");
    let out = agebif(&["continue", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_STEP_FAILURE);
    assert!(stdout(&out).contains("step_failure"));
}

#[test]
fn termination_exit_codes() {
    assert_eq!(termination_exit_code(Termination::BoxLambda), EXIT_OK);
    assert_eq!(termination_exit_code(Termination::BoxNorm), EXIT_OK);
    assert_eq!(termination_exit_code(Termination::MaxPoints), EXIT_OK);
    assert_eq!(termination_exit_code(Termination::StepFailure), EXIT_STEP_FAILURE);
    assert_eq!(termination_exit_code(Termination::LeftPositiveCone), EXIT_POSITIVITY);
}

#[test]
fn simulate_from_point_and_from_seeded_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_logistic(""));
    let out_dir = dir.path().join("out");
    assert_eq!(code(&agebif(&["continue", "--config", s(&cfg), "--out", s(&out_dir)])), EXIT_OK);

    let point = out_dir.join("snapshots/point_00008.json");
    let out = agebif(&["simulate", "--out", s(&out_dir), "--point", s(&point), "--steps", "50"]);
    assert_eq!(code(&out), EXIT_OK);
    let drift = fs::read_to_string(out_dir.join("drift.csv")).unwrap();
    assert_eq!(drift.lines().count(), 51);
    let cumulative: f64 = stdout(&out)
        .lines()
        .find(|l| l.starts_with("cumulative drift"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!(cumulative <= 1e-4);

    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        assert_eq!(code(&agebif(&["simulate", "--config", s(&cfg), "--out", s(r), "--steps", "20"])), EXIT_OK);
    }
    assert_eq!(fs::read(r1.join("drift.csv")).unwrap(), fs::read(r2.join("drift.csv")).unwrap());

    let field = write(dir.path(), "field.json", "[[1.0, 2.0], [3.0, 4.0]]");
    let out = agebif(&["simulate", "--config", s(&cfg), "--out", s(&r1), "--field", s(&field)]);
    assert_eq!(code(&out), EXIT_CONFIG);
}

#[test]
fn oracle_writes_the_homogeneous_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_logistic(""));
    let out_dir = dir.path().join("out");
    let out = agebif(&["oracle", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_OK);
    let text = fs::read_to_string(out_dir.join("oracle.csv")).unwrap();
    let lambdas: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lambdas.len(), 41);
    assert!(lambdas.windows(2).all(|w| w[1] > w[0]));
}
