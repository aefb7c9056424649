//! Verification suites: oracle equivalence on the shipped instances, the
//! randomized Snell-envelope invariant battery, enumeration cross-checks and
//! simulation diagnostics.  The command-line `verify` subcommand runs these
//! and fails on any violation; the acceptance tests reuse them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::control::{DyadicGrid, ImpulseControl, Mark, MarkSet};
use crate::error::Result;
use crate::instances;
use crate::oracle::{brute_force_value, enumerate_controls_value, FiniteInstance};
use crate::sfde::{moment_estimate, simulate_with_noise, NoiseRealization};
use crate::snell::{
    doob_meyer, expected_payoff_under, optimal_stop, snell_backward, EnvelopeEstimate,
    Information, LatticeModel,
};
use crate::solver::lattice::{evaluate_policy_exact, extract_policy, value_iteration};
use crate::solver::SolveOptions;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl VerifyReport {
    fn new(suite: &str) -> Self {
        VerifyReport {
            suite: suite.into(),
            checks: Vec::new(),
            pass: true,
        }
    }

    fn push(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(CheckResult {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn merge(mut self, other: VerifyReport) -> VerifyReport {
        self.pass &= other.pass;
        self.suite = format!("{}+{}", self.suite, other.suite);
        self.checks.extend(other.checks);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            format!("{}: {} checks passed", self.suite, self.checks.len())
        } else {
            format!("{}: FAILED {}", self.suite, failed.join(", "))
        }
    }
}

/// Agreement tolerance between the solver and the exhaustive oracle.
pub const ORACLE_VALUE_TOL: f64 = 1e-10;

/// Oracle equivalence and solver invariants on every shipped instance.
pub fn verify_lattice() -> VerifyReport {
    let mut report = VerifyReport::new("lattice");
    for inst in instances::shipped_instances() {
        verify_instance(&mut report, &inst);
    }
    report
}

fn verify_instance(report: &mut VerifyReport, inst: &FiniteInstance) {
    let name = &inst.name;
    let opts = SolveOptions {
        k_max: Some(inst.k_max),
        tol: 0.0,
        intervention_cutoff: None,
    };
    let values = match value_iteration(inst, &opts) {
        Ok(v) => v,
        Err(e) => {
            report.push(format!("{name}/solve"), false, e.to_string());
            return;
        }
    };
    let k = values.k_used();
    let bf = match brute_force_value(inst, k) {
        Ok(b) => b,
        Err(e) => {
            report.push(format!("{name}/oracle"), false, e.to_string());
            return;
        }
    };

    // per-stage root values and full surfaces agree with the oracle
    let mut max_dev: f64 = 0.0;
    for j in 0..=k {
        max_dev = max_dev.max((values.value0[j] - bf.value0[j]).abs());
        for i in 0..inst.n_nodes() {
            for x in 0..inst.n_states() {
                max_dev = max_dev.max((values.surfaces[j][i][x] - bf.values[j][i][x]).abs());
            }
        }
    }
    report.push(
        format!("{name}/oracle-equivalence"),
        max_dev <= ORACLE_VALUE_TOL,
        format!("max deviation {max_dev:.3e}"),
    );

    // extracted policy equals the oracle argmax table
    match extract_policy(inst, &values) {
        Ok(policy) => {
            let mut mismatches = 0usize;
            for used in 0..=k {
                let j = k - used;
                for i in 0..inst.n_nodes() {
                    for x in 0..inst.n_states() {
                        let solver_action = policy.action[used][i][x];
                        let oracle_action = bf.actions[j][i][x];
                        if solver_action != oracle_action {
                            mismatches += 1;
                        }
                    }
                }
            }
            report.push(
                format!("{name}/policy-table"),
                mismatches == 0,
                format!("{mismatches} action mismatches"),
            );

            match evaluate_policy_exact(inst, &policy) {
                Ok(v) => report.push(
                    format!("{name}/policy-attains-value"),
                    (v - values.final_value()).abs() <= ORACLE_VALUE_TOL,
                    format!("policy {v:.12} vs Y_0 {:.12}", values.final_value()),
                ),
                Err(e) => report.push(format!("{name}/policy-attains-value"), false, e.to_string()),
            }
        }
        Err(e) => report.push(format!("{name}/policy-table"), false, e.to_string()),
    }

    // stage monotonicity with zero tolerance and termination by the cap
    let monotone = values.increments.iter().all(|&d| d >= 0.0);
    report.push(
        format!("{name}/stage-monotonicity"),
        monotone,
        format!("min increment {:?}", values.increments.iter().cloned().fold(f64::INFINITY, f64::min)),
    );
    report.push(
        format!("{name}/cap-termination"),
        values.k_used() <= values.cap,
        format!("used {} of cap {}", values.k_used(), values.cap),
    );

    // uniform bound: every stage stays inside the no-intervention bound
    let bound = inst.value_bound() + 1e-12;
    let mut max_abs: f64 = 0.0;
    for stage in &values.surfaces {
        for row in stage {
            for &v in row {
                max_abs = max_abs.max(v.abs());
            }
        }
    }
    report.push(
        format!("{name}/uniform-bound"),
        max_abs <= bound,
        format!("max |Y| {max_abs:.6} vs bound {bound:.6}"),
    );

    // truncated-horizon sandwich: Y^0 <= ^T Y^k <= Y^k nodewise
    let mid = inst.times[inst.times.len() / 2];
    if let Ok(cut) = value_iteration(
        inst,
        &SolveOptions {
            intervention_cutoff: Some(mid),
            ..opts.clone()
        },
    ) {
        let kk = k.min(cut.k_used());
        let mut ok = true;
        for i in 0..inst.n_nodes() {
            for x in 0..inst.n_states() {
                let lo = values.surfaces[0][i][x];
                let midv = cut.surfaces[kk][i][x];
                let hi = values.surfaces[kk][i][x];
                ok &= lo <= midv && midv <= hi;
            }
        }
        report.push(format!("{name}/truncation-sandwich"), ok, format!("cutoff {mid}"));
    }

    // later-stage increments never exceed earlier ones
    let nonincreasing = values
        .increments
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12);
    report.push(
        format!("{name}/increment-decay"),
        nonincreasing,
        format!("increments {:?}", values.increments),
    );

    // JSON round trip preserves the solve (exercises the schema)
    match inst.to_json().and_then(|s| FiniteInstance::load_json(&s)) {
        Ok(back) => match value_iteration(&back, &opts) {
            Ok(v2) => report.push(
                format!("{name}/json-round-trip"),
                (v2.final_value() - values.final_value()).abs() == 0.0,
                "reloaded instance solves identically".to_string(),
            ),
            Err(e) => report.push(format!("{name}/json-round-trip"), false, e.to_string()),
        },
        Err(e) => report.push(format!("{name}/json-round-trip"), false, e.to_string()),
    }
}

/// Enumeration cross-check: open-loop enumeration equals the exhaustive DP
/// for up to two interventions, exactly, on every instance admitting it.
pub fn verify_enumeration() -> VerifyReport {
    let mut report = VerifyReport::new("enumeration");
    for inst in instances::enumeration_instances() {
        for k in 0..=2usize {
            match (brute_force_value(&inst, k), enumerate_controls_value(&inst, k)) {
                (Ok(bf), Ok(en)) => {
                    let dev = (bf.value0[k] - en.value).abs();
                    report.push(
                        format!("{}/enumeration-k{k}", inst.name),
                        dev == 0.0,
                        format!("dp {} vs enumeration {}", bf.value0[k], en.value),
                    );
                }
                (Err(e), _) | (_, Err(e)) => {
                    report.push(format!("{}/enumeration-k{k}", inst.name), false, e.to_string())
                }
            }
        }
    }
    report
}

/// A random payoff process on a random stochastic lattice.
pub fn random_lattice(rng: &mut ChaCha12Rng) -> (LatticeModel, Vec<Vec<f64>>) {
    let n_states = rng.random_range(2..=5);
    let n_steps = rng.random_range(3..=8);
    let mut kernels = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let mut kernel = vec![vec![0.0f64; n_states]; n_states];
        for row in kernel.iter_mut() {
            let raw: Vec<f64> = (0..n_states).map(|_| 0.05 + rng.random::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            for (c, r) in row.iter_mut().zip(&raw) {
                *c = r / sum;
            }
            let partial: f64 = row[..n_states - 1].iter().sum();
            row[n_states - 1] = 1.0 - partial;
        }
        kernels.push(kernel);
    }
    let lattice = LatticeModel::new(n_states, kernels, Information::Full).unwrap();
    let payoff = (0..=n_steps)
        .map(|_| (0..n_states).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
        .collect();
    (lattice, payoff)
}

/// The Snell invariant battery on `n_lattices` randomized lattices:
/// domination at zero tolerance, the one-step supermartingale inequality,
/// attainment of the envelope by the first-contact rule, the Doob-Meyer
/// decomposition, envelope minimality (spot perturbation) and monotone
/// payoff convergence.
pub fn verify_snell(n_lattices: usize, seed: u64) -> VerifyReport {
    let mut report = VerifyReport::new("snell");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst_super: f64 = 0.0;
    let mut worst_attain: f64 = 0.0;
    let mut worst_mart: f64 = 0.0;
    let mut dominated = true;
    let mut k_nonneg = true;
    let mut minimal = true;
    let mut monotone = true;

    for _ in 0..n_lattices {
        let (lattice, payoff) = random_lattice(&mut rng);
        let env = snell_backward(&lattice, &payoff).unwrap();
        let e = env.as_exact().unwrap();
        let n = lattice.n_steps();
        let s = lattice.n_states();

        for t in 0..=n {
            for x in 0..s {
                dominated &= e.values[t][x] >= e.payoff[t][x];
            }
        }
        for t in 0..n {
            for x in 0..s {
                // one-step supermartingale inequality, recomputed directly
                let cond = lattice.expect_next(t, x, &e.values[t + 1]);
                worst_super = worst_super.max(cond - e.values[t][x]);
            }
        }

        let rule = optimal_stop(&env).unwrap();
        let attained = expected_payoff_under(&lattice, &payoff, &rule);
        for x in 0..s {
            worst_attain = worst_attain.max((attained[x] - e.values[0][x]).abs());
        }

        let dm = doob_meyer(&env).unwrap();
        for t in 0..n {
            for x in 0..s {
                k_nonneg &= dm.k_inc[t][x] >= -1e-12;
                // conditional martingale increment must vanish
                let mut m = 0.0;
                for y in 0..s {
                    m += lattice.kernel(t)[x][y] * (e.values[t + 1][y] - dm.cond_exp[t][x]);
                }
                worst_mart = worst_mart.max(m.abs());
            }
        }

        // minimality: wherever the envelope strictly exceeds the payoff the
        // continuation is tight, so lowering Z there by any eps breaks the
        // supermartingale inequality at that node
        for t in 0..n {
            for x in 0..s {
                let gap = e.values[t][x] - e.payoff[t][x];
                if gap > 1e-9 {
                    let eps = 0.5 * gap;
                    let lowered = e.values[t][x] - eps;
                    let cond = lattice.expect_next(t, x, &e.values[t + 1]);
                    let breaks = lowered < e.payoff[t][x] || lowered < cond - 1e-12;
                    minimal &= breaks;
                }
            }
        }

        // monotone payoff convergence: payoffs increasing to `payoff` give
        // envelopes increasing to the envelope of `payoff`
        let deficits: Vec<Vec<f64>> = payoff
            .iter()
            .map(|row| row.iter().map(|_| 0.4 + rng.random::<f64>()).collect())
            .collect();
        let mut prev: Option<EnvelopeEstimate> = None;
        let mut max_deficit: f64 = 0.0;
        for j in 0..6 {
            let shrink = 0.5f64.powi(j);
            let approx: Vec<Vec<f64>> = payoff
                .iter()
                .zip(&deficits)
                .map(|(row, def)| {
                    row.iter()
                        .zip(def)
                        .map(|(&v, &d)| v - d * shrink)
                        .collect()
                })
                .collect();
            max_deficit = deficits
                .iter()
                .flatten()
                .fold(0.0f64, |a, &d| a.max(d * shrink));
            let env_j = snell_backward(&lattice, &approx).unwrap();
            if let Some(prev_env) = &prev {
                let a = prev_env.as_exact().unwrap();
                let b = env_j.as_exact().unwrap();
                for t in 0..=n {
                    for x in 0..s {
                        monotone &= a.values[t][x] <= b.values[t][x];
                    }
                }
            }
            prev = Some(env_j);
        }
        if let Some(last) = &prev {
            let l = last.as_exact().unwrap();
            for t in 0..=n {
                for x in 0..s {
                    monotone &=
                        l.values[t][x] <= e.values[t][x] && e.values[t][x] - l.values[t][x] <= max_deficit + 1e-12;
                }
            }
        }
    }

    report.push("snell/domination", dominated, "Z >= X at zero tolerance");
    report.push(
        "snell/supermartingale",
        worst_super <= 1e-12,
        format!("worst one-step violation {worst_super:.3e}"),
    );
    report.push(
        "snell/attainment",
        worst_attain <= 1e-12,
        format!("worst |E[X_tau*] - Z_0| = {worst_attain:.3e}"),
    );
    report.push("snell/doob-meyer-k", k_nonneg, "K increments nonnegative");
    report.push(
        "snell/doob-meyer-m",
        worst_mart <= 1e-12,
        format!("worst conditional M increment {worst_mart:.3e}"),
    );
    report.push("snell/minimality", minimal, "spot perturbations break the envelope");
    report.push(
        "snell/monotone-convergence",
        monotone,
        "envelopes increase with the payoff and converge",
    );
    report
}

/// Simulation diagnostics: bitwise determinism, control locality, strong
/// grid-refinement convergence and moment stability over a control family.
pub fn verify_sfde(seed: u64) -> VerifyReport {
    let mut report = VerifyReport::new("sfde");
    let problem = instances::bs_problem();

    // determinism, bit for bit
    {
        let grid = DyadicGrid::new(6, 1.0).unwrap();
        let u = ImpulseControl::from_pairs(&[(0.5, 1.5)]).unwrap();
        let p1 = crate::sfde::simulate(&problem, &u, &grid, seed).unwrap();
        let p2 = crate::sfde::simulate(&problem, &u, &grid, seed).unwrap();
        let same = (0..grid.n_nodes())
            .all(|i| p1.right_at_node(i).to_bits() == p2.right_at_node(i).to_bits());
        report.push("sfde/determinism", same, "identical seeds reproduce paths bitwise");
    }

    // control locality: agreement up to t implies identical paths before t
    {
        let grid = DyadicGrid::new(6, 1.0).unwrap();
        let noise = NoiseRealization::for_grid(&problem, seed, 1, &grid);
        let u1 = ImpulseControl::from_pairs(&[(0.5, 1.5)]).unwrap();
        let u2 = ImpulseControl::from_pairs(&[(0.5, 0.5), (0.75, 1.0)]).unwrap();
        let p1 = simulate_with_noise(&problem, &u1, &grid, &noise).unwrap();
        let p2 = simulate_with_noise(&problem, &u2, &grid, &noise).unwrap();
        let split = grid.node_index(0.5).unwrap();
        let same = (0..split)
            .all(|i| p1.right_at_node(i).to_bits() == p2.right_at_node(i).to_bits());
        report.push("sfde/control-locality", same, "paths agree before the controls differ");
    }

    // strong error under grid refinement decreases monotonically in l
    {
        let n_paths = 160;
        let fine_level = 11;
        let mut errors = Vec::new();
        for level in 4..=9u32 {
            let coarse = DyadicGrid::new(level, 1.0).unwrap();
            let finer = DyadicGrid::new(level + 2, 1.0).unwrap();
            let mut acc = 0.0;
            for p in 0..n_paths {
                let noise =
                    NoiseRealization::draw(&problem, seed, p as u64, fine_level, 1 << fine_level);
                let xc =
                    simulate_with_noise(&problem, &ImpulseControl::empty(), &coarse, &noise).unwrap();
                let xf =
                    simulate_with_noise(&problem, &ImpulseControl::empty(), &finer, &noise).unwrap();
                let mut sup = 0.0f64;
                for i in 0..coarse.n_nodes() {
                    let t = coarse.time(i);
                    let j = finer.node_index(t).unwrap();
                    sup = sup.max((xc.right_at_node(i) - xf.right_at_node(j)).abs());
                }
                acc += sup;
            }
            errors.push(acc / n_paths as f64);
        }
        let monotone = errors.windows(2).all(|w| w[1] < w[0]);
        report.push(
            "sfde/grid-refinement",
            monotone,
            format!("strong errors {errors:?}"),
        );
    }

    // moment stability over a randomized family of admissible controls
    {
        let problem = instances::ou_problem();
        let grid = DyadicGrid::new(5, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x51ab);
        let mut family = vec![ImpulseControl::empty()];
        for _ in 0..50 {
            let n_iv = rng.random_range(1..=3);
            let mut times: Vec<f64> = (0..n_iv)
                .map(|_| grid.snap(rng.random::<f64>()))
                .collect();
            times.sort_by(f64::total_cmp);
            let ctrl = ImpulseControl::new(
                times
                    .into_iter()
                    .map(|t| crate::control::Intervention {
                        t,
                        b: Mark::scalar(rng.random::<f64>() * 3.0 - 1.5),
                    })
                    .collect(),
            )
            .unwrap();
            family.push(ctrl);
        }
        let est = moment_estimate(&problem, &family, &grid, 1.0, 2, 64, seed).unwrap();
        let base = moment_estimate(
            &problem,
            &[ImpulseControl::empty()],
            &grid,
            1.0,
            2,
            64,
            seed,
        )
        .unwrap();
        // the impulse map is bounded by K_Gamma, so controlled moments stay
        // within a factor 1 + 10 K_Gamma^2 of the uncontrolled estimate
        let k_gamma = problem.growth.impulse_bound;
        let factor = 1.0 + 10.0 * k_gamma * k_gamma;
        let ratio = est.value / base.value.max(1e-12);
        report.push(
            "sfde/moment-stability",
            ratio <= factor,
            format!("controlled/uncontrolled moment ratio {ratio:.3} vs bound {factor:.1}"),
        );
    }

    report
}

/// Marks validity helper shared by CLI config checks.
pub fn check_mark_set(marks: &MarkSet) -> Result<()> {
    marks.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snell_suite_passes_on_a_small_batch() {
        let report = verify_snell(20, 2024);
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn enumeration_suite_passes() {
        let report = verify_enumeration();
        assert!(report.pass, "{}", report.summary());
    }
}
