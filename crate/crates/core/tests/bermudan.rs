//! Regression-based Snell envelope against a fine-lattice exact value on a
//! Bermudan-put-style stopping problem (geometric Brownian motion, strike 1,
//! eight exercise dates).

use std::sync::Arc;

use impulse_core::control::{DyadicGrid, ImpulseControl};
use impulse_core::instances::bs_problem;
use impulse_core::path::FeatureSpec;
use impulse_core::sfde::{simulate_with_noise, NoiseRealization, ProblemSpec};
use impulse_core::snell::{snell_backward, snell_regression, Basis, EnvelopeEstimate, Information, LatticeModel};
use statrs::distribution::{ContinuousCDF, Normal};

const RATE: f64 = 0.03;
const SIGMA: f64 = 0.25;
const STRIKE: f64 = 1.0;
const LEVEL: u32 = 3; // eight exercise dates over [0, 1]

/// Discounted put payoff as a function of the log-price.
fn payoff(t: f64, y: f64) -> f64 {
    (-RATE * t).exp() * (STRIKE - y.exp()).max(0.0)
}

fn log_gbm_problem() -> ProblemSpec {
    let mut p = bs_problem();
    p.name = "log-gbm".into();
    p.coefficients.drift = Arc::new(|_, _| RATE - 0.5 * SIGMA * SIGMA);
    p.coefficients.diffusion = Arc::new(|_, _| SIGMA);
    p.x0 = 0.0;
    p.pre_history = impulse_core::path::constant_pre_history(0.0);
    p
}

/// Exact value on a fine log-price lattice with Gaussian transition rows.
fn lattice_value() -> f64 {
    let bin = 0.005f64;
    let half = (1.2f64 / bin).round() as i64;
    let n_states = (2 * half + 1) as usize;
    let y_of = |j: usize| (j as i64 - half) as f64 * bin;
    let dt = 0.5f64.powi(LEVEL as i32);
    let sd = SIGMA * dt.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut kernel = vec![vec![0.0f64; n_states]; n_states];
    for (x, row) in kernel.iter_mut().enumerate() {
        let mean = y_of(x) + (RATE - 0.5 * SIGMA * SIGMA) * dt;
        let mut acc_prev = 0.0;
        for (j, cell) in row.iter_mut().enumerate() {
            let hi = if j + 1 == n_states {
                1.0
            } else {
                normal.cdf((y_of(j) + 0.5 * bin - mean) / sd)
            };
            *cell = hi - acc_prev;
            acc_prev = hi;
        }
        let sum: f64 = row.iter().sum();
        row[n_states - 1] += 1.0 - sum;
    }
    let n_steps = 1usize << LEVEL;
    let lattice = LatticeModel::stationary(kernel, n_steps, Information::Full).unwrap();
    let table: Vec<Vec<f64>> = (0..=n_steps)
        .map(|i| {
            let t = i as f64 * dt;
            (0..n_states).map(|x| payoff(t, y_of(x))).collect()
        })
        .collect();
    let env = snell_backward(&lattice, &table).unwrap();
    env.as_exact().unwrap().values[0][half as usize]
}

#[test]
fn bermudan_put_regression_matches_fine_lattice() {
    let exact = lattice_value();
    let problem = log_gbm_problem();
    let grid = DyadicGrid::new(LEVEL, 1.0).unwrap();
    let n_paths = 20_000;
    let paths: Vec<_> = (0..n_paths)
        .map(|p| {
            let noise = NoiseRealization::for_grid(&problem, 41, p as u64, &grid);
            simulate_with_noise(&problem, &ImpulseControl::empty(), &grid, &noise).unwrap()
        })
        .collect();
    let dates: Vec<usize> = (0..=grid.n_steps()).collect();
    let table: Vec<Vec<f64>> = dates
        .iter()
        .map(|&i| {
            let t = grid.time(i);
            paths.iter().map(|p| payoff(t, p.right_at_node(i))).collect()
        })
        .collect();
    let basis = Basis::Polynomial {
        features: FeatureSpec::default(),
        degree: 5,
    };
    let env = snell_regression(&paths, &dates, &table, &basis, 1e-8).unwrap();
    match env {
        EnvelopeEstimate::Regression(r) => {
            assert!(
                (r.value0 - exact).abs() <= 3.0 * r.stderr,
                "regression {} +- {} vs lattice {exact}",
                r.value0,
                r.stderr
            );
            assert!(r.stderr < 0.02 * r.value0, "stderr {} too large", r.stderr);
        }
        EnvelopeEstimate::Exact(_) => unreachable!(),
    }
}
