//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! 1. Closed-form example reproduction on grid levels 4..9.
//! 2. Oracle equivalence on the shipped finite instances.
//! 3. Enumeration cross-check (k <= 2, exact).
//! 4. Snell invariants on 100 randomized lattices.
//! 5. Stage monotonicity and the domination cap on every instance.
//! 6. Regression-vs-lattice agreement on the GBM impulse instance.
//! 7. Flow-continuity rate under common random numbers.
//! 8. Exponential tail decay under rho(t) = t.
//! 9. Byte-identical artifacts across reruns.

use std::time::Instant;

use impulse_cli::{run_example, run_simulate, run_solve, RunConfig};
use impulse_core::control::{DyadicGrid, ImpulseControl};
use impulse_core::instances::{
    self, example_instance, flow_gbm_problem, gbm_lattice, gbm_problem, tail_decay_instance,
    GbmSpec,
};
use impulse_core::oracle::{brute_force_value, example_supremum};
use impulse_core::path::FeatureSpec;
use impulse_core::sfde::{fit_slope, flow_perturbation_test};
use impulse_core::solver::lattice as lattice_solver;
use impulse_core::solver::regression::{self, RegressionOptions};
use impulse_core::solver::SolveOptions;
use impulse_core::verify;

fn pass(criterion: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion} ({name}): PASS - {detail}");
}

#[test]
fn acceptance_1_example_reproduction() {
    let e = std::f64::consts::E;
    let sup = example_supremum();
    let mut previous = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for level in 4..=9u32 {
        let start = Instant::now();
        let instance = example_instance(level);
        let (values, _policy) =
            lattice_solver::solve_random_horizon(&instance, &SolveOptions::default()).unwrap();
        let elapsed = start.elapsed();
        let h = 0.5f64.powi(level as i32);
        let closed_form = 0.5 * (1.0 + e) - h.exp();
        let value = values.final_value();
        assert!(
            (value - closed_form).abs() < 1e-9,
            "level {level}: value {value:.12} vs closed form {closed_form:.12}"
        );
        assert!(value > previous, "values must strictly increase in the level");
        assert!(value < sup, "level {level}: value must stay below the supremum");
        assert!(
            sup - value <= 2.0 * h,
            "level {level}: gap {} exceeds 2*2^-l = {}",
            sup - value,
            2.0 * h
        );
        assert!(
            elapsed.as_secs_f64() < 1.0,
            "level {level} took {elapsed:?}, budget is 1 s"
        );
        previous = value;
        details.push(format!("l={level}: {value:.9} ({elapsed:.0?})"));
    }
    pass(
        1,
        "example reproduction",
        format!("{}; supremum {sup:.9} never attained", details.join(", ")),
    );
}

#[test]
fn acceptance_2_oracle_equivalence() {
    let start = Instant::now();
    let instances = instances::shipped_instances();
    assert!(instances.len() >= 5, "need at least five shipped instances");
    for inst in &instances {
        let values = lattice_solver::value_iteration(
            inst,
            &SolveOptions {
                k_max: Some(inst.k_max),
                tol: 0.0,
                intervention_cutoff: None,
            },
        )
        .unwrap();
        let k = values.k_used();
        let bf = brute_force_value(inst, k).unwrap();
        for j in 0..=k {
            assert!(
                (values.value0[j] - bf.value0[j]).abs() <= 1e-10,
                "{}: stage {j} solver {} vs oracle {}",
                inst.name,
                values.value0[j],
                bf.value0[j]
            );
            for i in 0..inst.n_nodes() {
                for x in 0..inst.n_states() {
                    assert!(
                        (values.surfaces[j][i][x] - bf.values[j][i][x]).abs() <= 1e-10,
                        "{}: surface mismatch at (j={j}, i={i}, x={x})",
                        inst.name
                    );
                }
            }
        }
        let policy = lattice_solver::extract_policy(inst, &values).unwrap();
        for used in 0..=k {
            let j = k - used;
            for i in 0..inst.n_nodes() {
                for x in 0..inst.n_states() {
                    assert_eq!(
                        policy.action[used][i][x], bf.actions[j][i][x],
                        "{}: action mismatch at (used={used}, i={i}, x={x})",
                        inst.name
                    );
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "oracle equivalence took {elapsed:?}, budget is 5 s"
    );
    pass(
        2,
        "oracle equivalence",
        format!(
            "{} instances match values to 1e-10 and action tables exactly ({elapsed:.0?})",
            instances.len()
        ),
    );
}

#[test]
fn acceptance_3_enumeration_cross_check() {
    let report = verify::verify_enumeration();
    assert!(report.pass, "{}", report.summary());
    pass(
        3,
        "enumeration cross-check",
        format!("{} exact equalities up to two interventions", report.checks.len()),
    );
}

#[test]
fn acceptance_4_snell_invariants() {
    let report = verify::verify_snell(100, 20_240_809);
    for check in &report.checks {
        assert!(check.pass, "{}: {}", check.name, check.detail);
    }
    pass(
        4,
        "snell invariants",
        "100 randomized lattices: domination, supermartingale, attainment, Doob-Meyer, minimality, monotone convergence".into(),
    );
}

#[test]
fn acceptance_5_stage_monotonicity_and_cap() {
    // exact mode, zero tolerance, on every shipped instance plus the
    // example and the GBM lattice
    let mut all = instances::shipped_instances();
    all.push(example_instance(5));
    all.push(gbm_lattice(&GbmSpec::standard()).unwrap());
    for inst in &all {
        let values = lattice_solver::value_iteration(&inst.clone(), &SolveOptions::default()).unwrap();
        for (k, d) in values.increments.iter().enumerate() {
            assert!(
                *d >= 0.0,
                "{}: stage {} decreased by {d:e}",
                inst.name,
                k + 1
            );
        }
        assert!(
            values.k_used() <= values.cap,
            "{}: {} stages exceeded the cap {}",
            inst.name,
            values.k_used(),
            values.cap
        );
        assert!(
            values.converged_at.is_some(),
            "{}: iteration must terminate by the cap with a positive cost floor",
            inst.name
        );
    }

    // regression mode: nodewise within three prediction standard errors
    let spec = GbmSpec::standard();
    let problem = gbm_problem(&spec);
    let grid = DyadicGrid::new(spec.grid_level, spec.horizon).unwrap();
    let opts = RegressionOptions {
        n_paths: 30_000,
        seed: 5,
        k_max: 3,
        tol: Some(0.0),
        features: FeatureSpec::default(),
        degree: 3,
        ridge: 1e-8,
        date_stride: 1,
        eval_paths: 100,
        initial_dispersion: 0.08,
    };
    let rv = regression::value_iteration(&problem, &grid, &opts).unwrap();
    for (k, margin) in rv.mono_margin_min.iter().enumerate() {
        assert!(
            *margin >= 0.0,
            "regression stage {}: monotonicity margin {margin:e}",
            k + 1
        );
    }
    pass(
        5,
        "stage monotonicity and cap",
        format!(
            "{} exact instances at zero tolerance; regression margins {:?}",
            all.len(),
            rv.mono_margin_min
        ),
    );
}

#[test]
fn acceptance_6_regression_vs_lattice() {
    let start = Instant::now();
    let spec = GbmSpec::standard();
    let instance = gbm_lattice(&spec).unwrap();
    let exact = lattice_solver::value_iteration(
        &instance,
        &SolveOptions {
            k_max: Some(6),
            tol: 1e-9,
            intervention_cutoff: None,
        },
    )
    .unwrap()
    .final_value();

    let problem = gbm_problem(&spec);
    let grid = DyadicGrid::new(spec.grid_level, spec.horizon).unwrap();
    let opts = RegressionOptions {
        n_paths: 100_000,
        seed: 20_240_809,
        k_max: 4,
        tol: None,
        features: FeatureSpec::default(),
        degree: 3,
        ridge: 1e-8,
        date_stride: 1,
        eval_paths: 100_000,
        initial_dispersion: 0.08,
    };
    let solution = regression::solve(&problem, &grid, &opts).unwrap();
    let elapsed = start.elapsed();

    // the lattice value is exact, so the combined error is the forward one
    let combined = solution.forward.stderr;
    let gap = solution.forward.mean - exact;
    assert!(
        gap.abs() <= 3.0 * combined,
        "regression {} +- {} vs lattice {exact}: gap {gap:+e} exceeds 3 se",
        solution.forward.mean,
        solution.forward.stderr
    );
    assert!(
        solution.forward.stderr < 0.01 * solution.forward.mean.abs(),
        "stderr {} is not below 1% of the value",
        solution.forward.stderr
    );
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "regression solve took {elapsed:?}, budget is 60 s"
    );
    pass(
        6,
        "regression vs lattice",
        format!(
            "lattice {exact:.6}, regression {:.6} +- {:.6} (gap {:+.2} se, {elapsed:.0?})",
            solution.forward.mean,
            solution.forward.stderr,
            gap / combined
        ),
    );
}

#[test]
fn acceptance_7_flow_continuity_rate() {
    // GBM-type instance, m = 0, common random numbers: slope of the fourth
    // moment of the sup distance against the time perturbation
    let problem = flow_gbm_problem();
    let grid = DyadicGrid::new(8, 1.0).unwrap();
    let deltas: Vec<(f64, f64)> = (4..=8).map(|j| (0.5f64.powi(j), 0.0)).collect();
    let fc = flow_perturbation_test(
        &problem,
        &ImpulseControl::empty(),
        &ImpulseControl::empty(),
        0.25,
        1.0,
        &deltas,
        &grid,
        2_000,
        20_240_809,
    )
    .unwrap();
    assert_eq!(fc.moment_power, 4, "m = 0 gives the fourth moment");
    let slope = fc.slope.expect("slope must fit");
    assert!(slope >= 1.6, "time-perturbation slope {slope} below 1.6");

    // pure reset dynamics: the mark perturbation gives slope 4 exactly
    let mut reset = flow_gbm_problem();
    reset.coefficients.drift = std::sync::Arc::new(|_, _| 0.0);
    reset.coefficients.diffusion = std::sync::Arc::new(|_, _| 0.0);
    let db: Vec<(f64, f64)> = (2..=6).map(|j| (0.0, 0.5f64.powi(j))).collect();
    let fb = flow_perturbation_test(
        &reset,
        &ImpulseControl::empty(),
        &ImpulseControl::empty(),
        0.25,
        0.5,
        &db,
        &grid,
        8,
        1,
    )
    .unwrap();
    let slope_b = fb.slope.expect("slope must fit");
    assert!(
        (slope_b - 4.0).abs() < 1e-9,
        "pure-reset mark slope {slope_b} must be 4 exactly"
    );
    pass(
        7,
        "flow-continuity rate",
        format!("dt slope {slope:.3} (>= 1.6), pure-reset db slope {slope_b:.12}"),
    );
}

#[test]
fn acceptance_8_tail_decay() {
    // |J_T - J_2T| under rho(t) = t decays at rate >= 0.9 epsilon
    let opts = SolveOptions::default();
    let values: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&t| {
            lattice_solver::value_iteration(&tail_decay_instance(t), &opts)
                .unwrap()
                .final_value()
        })
        .collect();
    let diffs: Vec<(f64, f64)> = vec![
        (2.0, (values[0] - values[1]).abs()),
        (4.0, (values[1] - values[2]).abs()),
        (8.0, (values[2] - values[3]).abs()),
    ];
    let pts: Vec<(f64, f64)> = diffs.iter().map(|&(t, d)| (t, d.ln())).collect();
    let rate_j = -fit_slope(&pts).expect("fit");
    assert!(rate_j >= 0.9, "J-truncation decay rate {rate_j} below 0.9 epsilon");

    // sup-node |Y^k - Y^0| beyond T' decreases in T' and decays at the rate
    let inst = tail_decay_instance(8.0);
    let values = lattice_solver::value_iteration(&inst, &opts).unwrap();
    let k = values.k_used();
    let mut rows = Vec::new();
    for t_cut in [1.0, 2.0, 3.0, 4.0] {
        let mut sup = 0.0f64;
        for i in 0..inst.n_nodes() {
            if inst.times[i] < t_cut {
                continue;
            }
            for x in 0..inst.n_states() {
                sup = sup.max((values.surfaces[k][i][x] - values.surfaces[0][i][x]).abs());
            }
        }
        rows.push((t_cut, sup));
    }
    for w in rows.windows(2) {
        assert!(w[1].1 < w[0].1, "future impact must decrease in T': {rows:?}");
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(t, d)| (t, d.ln())).collect();
    let rate_y = -fit_slope(&pts).expect("fit");
    assert!(rate_y >= 0.9, "Y-impact decay rate {rate_y} below 0.9 epsilon");
    pass(
        8,
        "tail decay",
        format!("J-rate {rate_j:.3}, Y-impact rate {rate_y:.3} (both >= 0.9 epsilon = 0.9)"),
    );
}

#[test]
fn acceptance_9_determinism() {
    let base = tempfile::tempdir().unwrap();
    let dir_a = base.path().join("a");
    let dir_b = base.path().join("b");

    let mut cfg = RunConfig {
        problem: "two_state_switch".into(),
        seed: 424_242,
        n_paths: 4_000,
        ..RunConfig::default()
    };
    cfg.out = Some(dir_a.to_string_lossy().into_owned());
    run_solve(&cfg).unwrap();
    cfg.out = Some(dir_b.to_string_lossy().into_owned());
    run_solve(&cfg).unwrap();
    let mut compared = compare_dirs(&dir_a, &dir_b);

    let dir_a = base.path().join("ea");
    let dir_b = base.path().join("eb");
    let mut cfg = RunConfig {
        level: 6,
        ..RunConfig::default()
    };
    cfg.out = Some(dir_a.to_string_lossy().into_owned());
    run_example(&cfg).unwrap();
    cfg.out = Some(dir_b.to_string_lossy().into_owned());
    run_example(&cfg).unwrap();
    compared += compare_dirs(&dir_a, &dir_b);

    let dir_a = base.path().join("sa");
    let dir_b = base.path().join("sb");
    let mut cfg = RunConfig {
        problem: "bs".into(),
        level: 6,
        n_paths: 64,
        seed: 9,
        control: Some(r#"[{"t":0.25,"b":1.5}]"#.into()),
        ..RunConfig::default()
    };
    cfg.out = Some(dir_a.to_string_lossy().into_owned());
    run_simulate(&cfg).unwrap();
    cfg.out = Some(dir_b.to_string_lossy().into_owned());
    run_simulate(&cfg).unwrap();
    compared += compare_dirs(&dir_a, &dir_b);

    pass(
        9,
        "determinism",
        format!("{compared} artifacts byte-identical across reruns (timing column excluded)"),
    );
}

/// Compares every artifact in two run directories byte for byte; the
/// convergence log is compared on its numeric columns (`k,sup_increment`),
/// excluding the wall-time column.
fn compare_dirs(a: &std::path::Path, b: &std::path::Path) -> usize {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let names_b: std::collections::BTreeSet<String> = std::fs::read_dir(b)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(
        names.iter().cloned().collect::<std::collections::BTreeSet<_>>(),
        names_b,
        "run directories produced different artifact sets"
    );
    let mut compared = 0;
    for name in &names {
        // resolved_config differs only in the recorded output path
        if name == "resolved_config.json" {
            continue;
        }
        let ca = std::fs::read(a.join(name)).unwrap();
        let cb = std::fs::read(b.join(name)).unwrap();
        if name == "convergence.csv" {
            let strip = |bytes: &[u8]| -> Vec<String> {
                String::from_utf8_lossy(bytes)
                    .lines()
                    .map(|l| l.rsplitn(2, ',').last().unwrap_or(l).to_string())
                    .collect()
            };
            assert_eq!(strip(&ca), strip(&cb), "{name} numeric columns differ");
        } else {
            assert_eq!(ca, cb, "{name} differs between reruns");
        }
        compared += 1;
    }
    compared
}
