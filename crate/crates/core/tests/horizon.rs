//! Horizon selection and admissibility decay on a discounted instance.

use impulse_core::control::{DyadicGrid, ImpulseControl};
use impulse_core::instances::{bounded_discounted_problem, non_decaying_problem};
use impulse_core::reward::admissibility_report;
use impulse_core::solver::choose_horizon;
use impulse_core::Error;

#[test]
fn admissibility_tail_decays_at_the_declared_rate() {
    // rho(t) = t with bounded running reward: the squared-difference tail
    // decays at rate about 2 epsilon; the fit must recover at least 0.9 of
    // the declared epsilon
    let problem = bounded_discounted_problem();
    let grid = DyadicGrid::new(4, 10.0).unwrap();
    let family = vec![
        ImpulseControl::empty(),
        ImpulseControl::from_pairs(&[(0.5, 0.5)]).unwrap(),
        ImpulseControl::from_pairs(&[(1.0, -1.0), (1.5, 1.0)]).unwrap(),
    ];
    let report =
        admissibility_report(&problem, &grid, &family, &[2.0, 4.0, 8.0], 96, 5).unwrap();
    let rate = report.fitted_rate.expect("decay must be detected");
    assert!(
        rate >= 0.9 * problem.rewards.epsilon,
        "fitted tail rate {rate} vs 0.9 epsilon = {}",
        0.9 * problem.rewards.epsilon
    );
    assert!(report.pass, "flags: {:?}", report.flags);
    // moments are finite and positive second moments were recorded
    assert!(report.phi_second_moment > 0.0);
    assert!(report.cost_second_moment > 0.0);
    // the report exports as JSON with per-check fields
    let json = report.to_json().unwrap();
    assert!(json.contains("fitted_rate") && json.contains("tail"));
}

#[test]
fn choose_horizon_solves_the_fitted_tail_bound() {
    let problem = bounded_discounted_problem();
    let probe = DyadicGrid::new(3, 10.0).unwrap();
    let tol = 1e-4;
    let choice = choose_horizon(&problem, &probe, &[2.0, 4.0, 8.0], tol, 64, 11).unwrap();
    // the returned horizon satisfies the recorded bound and is grid-aligned
    assert!(choice.bound_at_horizon < tol);
    assert!(choice.fitted_rate > 0.0);
    let expect = ((choice.fitted_c / tol).ln() / choice.fitted_rate / probe.step()).ceil()
        * probe.step();
    assert_eq!(choice.horizon, expect.max(0.0));
    // the fitted rate tracks half the squared-tail rate, close to epsilon
    assert!(
        choice.fitted_rate >= 0.45 * problem.rewards.epsilon,
        "rate {}",
        choice.fitted_rate
    );
}

#[test]
fn undiscounted_problem_triggers_horizon_error() {
    let problem = non_decaying_problem();
    let probe = DyadicGrid::new(3, 10.0).unwrap();
    let err = choose_horizon(&problem, &probe, &[2.0, 4.0, 8.0], 1e-4, 32, 11).unwrap_err();
    assert!(matches!(err, Error::HorizonSelection(_)), "{err}");
}
