//! Command-level behavior: config resolution, usage errors and exit codes,
//! artifact layout, policy round trips.

use impulse_cli::{
    lattice_instance, run_example, run_policy_eval, run_simulate, run_solve, run_verify,
    CliError, RunConfig,
};

fn cfg() -> RunConfig {
    RunConfig::default()
}

#[test]
fn level_out_of_range_is_a_usage_error() {
    let mut c = cfg();
    c.level = 20;
    let err = c.validate().unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message().contains("level out of range"), "{err}");
}

#[test]
fn unknown_problem_and_backend_are_usage_errors() {
    let mut c = cfg();
    c.problem = "nonsense".into();
    let err = lattice_instance(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let mut c = cfg();
    c.backend = "quantum".into();
    assert_eq!(c.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn mode_mismatch_names_the_horizon() {
    let mut c = cfg();
    c.problem = "two_state_switch".into();
    c.mode = "random-horizon".into();
    let err = lattice_instance(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message().contains("infinite"), "{err}");
}

#[test]
fn solve_requires_an_output_directory() {
    let mut c = cfg();
    c.problem = "single_step".into();
    let err = run_solve(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn example_command_prints_value_and_target() {
    let mut c = cfg();
    c.level = 5;
    let message = run_example(&c).unwrap();
    assert!(message.contains("0.827397507"), "{message}");
    assert!(message.contains("0.859140914"), "{message}");
}

#[test]
fn solve_writes_all_artifacts_and_policy_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.problem = "ratchet".into();
    c.n_paths = 500;
    c.out = Some(dir.path().to_string_lossy().into_owned());
    run_solve(&c).unwrap();
    for artifact in [
        "values.json",
        "policy.json",
        "convergence.csv",
        "report.json",
        "resolved_config.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }

    // the saved policy re-evaluates to the same exact value
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let value = report["policy_value_exact"].as_f64().unwrap();
    let eval_dir = tempfile::tempdir().unwrap();
    let mut c2 = cfg();
    c2.problem = "ratchet".into();
    c2.n_paths = 500;
    c2.out = Some(eval_dir.path().to_string_lossy().into_owned());
    let message = run_policy_eval(&c2, &dir.path().join("policy.json")).unwrap();
    assert!(message.contains(&format!("{value:.8}")), "{message}");
}

#[test]
fn policy_for_the_wrong_instance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.problem = "single_step".into();
    c.out = Some(dir.path().to_string_lossy().into_owned());
    run_solve(&c).unwrap();
    let mut other = cfg();
    other.problem = "ratchet".into();
    let err = run_policy_eval(&other, &dir.path().join("policy.json")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn verify_lattice_suite_passes_and_writes_report() {
    // `verify --suite lattice` on the shipped instances exits 0
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.out = Some(dir.path().to_string_lossy().into_owned());
    let message = run_verify(&c, "lattice").unwrap();
    assert!(message.contains("checks passed"), "{message}");
    assert!(dir.path().join("report.json").exists());

    let message = run_verify(&cfg(), "enumeration").unwrap();
    assert!(message.contains("checks passed"), "{message}");
}

#[test]
fn verify_rejects_unknown_suite() {
    let err = run_verify(&cfg(), "everything").unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn simulate_honors_the_control_and_writes_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.problem = "bs".into();
    c.level = 5;
    c.n_paths = 16;
    c.control = Some(r#"[{"t":0.5,"b":1.25}]"#.into());
    c.out = Some(dir.path().to_string_lossy().into_owned());
    run_simulate(&c).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("path_000.csv")).unwrap();
    assert!(csv.starts_with("t,X_left,X_right,jump_flag"));
    // the reset to 1.25 at t = 0.5 is visible in the path file
    let line = csv.lines().find(|l| l.starts_with("0.5,")).unwrap();
    assert!(line.ends_with(",1.25,1"), "impulse row: {line}");
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn regression_solve_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.problem = "gbm-mc".into();
    c.backend = "regression-mc".into();
    c.n_paths = 2_000;
    c.eval_paths = 2_000;
    c.dispersion = 0.08;
    c.out = Some(dir.path().to_string_lossy().into_owned());
    let message = run_solve(&c).unwrap();
    assert!(message.contains("forward value"), "{message}");
    for artifact in ["values.json", "policy.json", "convergence.csv", "report.json"] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["backend"], "regression-mc");
    assert!(report["stderr"].as_f64().unwrap() > 0.0);
}

#[test]
fn off_grid_control_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg();
    c.problem = "bs".into();
    c.level = 2;
    c.n_paths = 2;
    c.control = Some(r#"[{"t":0.3,"b":1.0}]"#.into());
    c.out = Some(dir.path().to_string_lossy().into_owned());
    let err = run_simulate(&c).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn config_file_merges_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "problem = \"single_step\"\nseed = 77\n").unwrap();
    let args = impulse_cli::CommonArgs {
        config: Some(path),
        n_paths: Some(123),
        ..Default::default()
    };
    let resolved = args.resolve().unwrap();
    assert_eq!(resolved.problem, "single_step");
    assert_eq!(resolved.seed, 77);
    assert_eq!(resolved.n_paths, 123);
}

#[test]
fn unknown_config_key_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "probelm = \"typo\"\n").unwrap();
    let args = impulse_cli::CommonArgs {
        config: Some(path),
        ..Default::default()
    };
    let err = args.resolve().unwrap_err();
    assert!(matches!(err, CliError::Usage(_)));
}
