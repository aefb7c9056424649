//! Exact lattice backend: value iteration via Snell-envelope backward
//! recursion, policy extraction and exact/Monte-Carlo policy evaluation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use super::{ConvergenceRow, PolicyEvaluation, SolveOptions};
use crate::error::{Error, Result};
use crate::oracle::{FiniteInstance, HorizonWeights, LatticeHorizon};
use crate::snell::{backward_induction, Information};

/// Stage-indexed value surfaces of the exact backend.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeValues {
    pub instance_name: String,
    /// `surfaces[k][i][x]`: decision value with at most `k` interventions
    /// remaining from node `i` in state `x` (discounted to time zero).
    pub surfaces: Vec<Vec<Vec<f64>>>,
    /// Intervention obstacle per stage (`-inf` where interventions are
    /// disallowed); `obstacles[0]` is empty.
    pub obstacles: Vec<Vec<Vec<f64>>>,
    /// Continuation branch per stage.
    pub continues: Vec<Vec<Vec<f64>>>,
    /// Root value per stage (terminal-branch weight at node 0 included).
    pub value0: Vec<f64>,
    /// `increments[k-1]` = sup-norm of `surfaces[k] - surfaces[k-1]`.
    pub increments: Vec<f64>,
    /// Timing lives only in the convergence CSV so the JSON artifacts stay
    /// byte-identical across reruns.
    #[serde(skip)]
    pub convergence: Vec<ConvergenceRow>,
    /// First stage whose increment fell below the tolerance.
    pub converged_at: Option<usize>,
    /// Domination cap used to bound the stage count.
    pub cap: usize,
}

impl LatticeValues {
    pub fn k_used(&self) -> usize {
        self.surfaces.len() - 1
    }

    pub fn final_value(&self) -> f64 {
        *self.value0.last().expect("at least stage 0")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn build_obstacle(
    instance: &FiniteInstance,
    prev_surface: &[Vec<f64>],
    cutoff: Option<f64>,
) -> Vec<Vec<f64>> {
    let n = instance.n_nodes();
    let s = instance.n_states();
    let m = instance.n_marks();
    let mut obstacle = vec![vec![f64::NEG_INFINITY; s]; n];
    for i in 0..n {
        if let Some(cut) = cutoff {
            if instance.times[i] >= cut {
                continue;
            }
        }
        for x in 0..s {
            let mut best = f64::NEG_INFINITY;
            for b in 0..m {
                let y = instance.impulse[i][x][b];
                let v = -instance.discount[i] * instance.cost[i][x][b] + prev_surface[i][y];
                if v > best {
                    best = v;
                }
            }
            obstacle[i][x] = best;
        }
    }
    obstacle
}

/// Picard iteration over the number of remaining interventions.  Stage `k`
/// is the Snell envelope (with flow) of the obstacle built from stage
/// `k - 1`; stages are nondecreasing pointwise with zero tolerance, and the
/// loop stops at convergence or at the domination cap.
pub fn value_iteration(instance: &FiniteInstance, opts: &SolveOptions) -> Result<LatticeValues> {
    instance.validate()?;
    let n = instance.n_nodes();
    let s = instance.n_states();
    let w: HorizonWeights = instance.weights();
    let cap = instance.intervention_cap();
    // the domination cap is the default stage budget
    let k_limit = opts.k_max.unwrap_or(cap).min(cap).max(1);

    let flow: Vec<Vec<f64>> = (0..n - 1)
        .map(|i| (0..s).map(|x| w.flow_w[i] * instance.flow[i][x]).collect())
        .collect();
    let terminal = vec![0.0; s];

    // the cap can be enormous under strong discounting (the domination
    // floor degrades like e^{-rho(T)}), so storage grows incrementally and
    // the tolerance is what terminates in practice
    let mut surfaces: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut obstacles: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    let mut continues: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut value0 = Vec::new();
    let mut increments = Vec::new();
    let mut convergence = Vec::new();
    let mut converged_at = None;

    let start = Instant::now();
    let base = backward_induction(
        &instance.lattice,
        None,
        &flow,
        Some(&w.absorb),
        Some(&w.cont_w),
        &terminal,
    );
    value0.push(w.absorb[0][instance.x0] + w.cont_w[0] * base.values[0][instance.x0]);
    continues.push(base.continues);
    surfaces.push(base.values);
    convergence.push(ConvergenceRow {
        k: 0,
        sup_increment: f64::NAN,
        wall_time: start.elapsed().as_secs_f64(),
    });

    for k in 1..=k_limit {
        let stage_start = Instant::now();
        let obstacle = build_obstacle(instance, &surfaces[k - 1], opts.intervention_cutoff);
        let result = backward_induction(
            &instance.lattice,
            Some(&obstacle),
            &flow,
            Some(&w.absorb),
            Some(&w.cont_w),
            &terminal,
        );
        let mut sup = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for i in 0..n {
            for x in 0..s {
                let d = result.values[i][x] - surfaces[k - 1][i][x];
                sup = sup.max(d);
                min = min.min(d);
            }
        }
        if min < 0.0 {
            return Err(Error::InternalConsistency(format!(
                "stage {k} decreased some node by {min:e}; the iteration must be monotone"
            )));
        }
        value0.push(w.absorb[0][instance.x0] + w.cont_w[0] * result.values[0][instance.x0]);
        surfaces.push(result.values);
        continues.push(result.continues);
        obstacles.push(obstacle);
        increments.push(sup);
        convergence.push(ConvergenceRow {
            k,
            sup_increment: sup,
            wall_time: stage_start.elapsed().as_secs_f64(),
        });
        // an exactly-zero increment freezes every later stage, so it always
        // counts as converged even under a zero tolerance
        if sup < opts.tol || sup == 0.0 {
            converged_at = Some(k);
            break;
        }
    }

    Ok(LatticeValues {
        instance_name: instance.name.clone(),
        surfaces,
        obstacles,
        continues,
        value0,
        increments,
        convergence,
        converged_at,
        cap,
    })
}

/// Intervention rule extracted from the value surfaces: per (interventions
/// used, node, state), whether to intervene and with which mark.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Policy {
    pub instance_name: String,
    pub k_total: usize,
    pub mark_labels: Vec<f64>,
    /// `action[used][i][x]` = `Some(mark index)` to intervene.
    pub action: Vec<Vec<Vec<Option<usize>>>>,
}

impl Policy {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_interventions_bound(&self) -> usize {
        self.k_total
    }
}

/// First-contact policy of the last iterate: intervene where the obstacle
/// is at least the continuation value (ties stop, matching the infimum in
/// the first-contact stopping times), with argmax ties broken toward the
/// smallest mark.  After `used` interventions the surface with
/// `k_total - used` remaining interventions decides.
pub fn extract_policy(instance: &FiniteInstance, values: &LatticeValues) -> Result<Policy> {
    let k_total = values.k_used();
    let n = instance.n_nodes();
    let s = instance.n_states();
    let m = instance.n_marks();

    // nodes an observable horizon has surely passed carry no live decision
    let dead_from = match (&instance.horizon, instance.lattice.info()) {
        (LatticeHorizon::Random { pmf, .. }, Information::Full) => {
            pmf.last().map(|&(node, _)| node)
        }
        _ => None,
    };

    let mut action = vec![vec![vec![None; s]; n]; k_total + 1];
    for used in 0..k_total {
        let k_left = k_total - used;
        for i in 0..n {
            if dead_from.is_some_and(|d| i >= d) {
                continue;
            }
            for x in 0..s {
                let obstacle = values.obstacles[k_left][i][x];
                let cont = values.continues[k_left][i][x];
                if obstacle.is_finite() && obstacle >= cont {
                    // argmax over marks; strict improvement keeps the first
                    // (smallest) mark on ties
                    let mut best = f64::NEG_INFINITY;
                    let mut best_mark = 0;
                    for b in 0..m {
                        let y = instance.impulse[i][x][b];
                        let v = -instance.discount[i] * instance.cost[i][x][b]
                            + values.surfaces[k_left - 1][i][y];
                        if v > best {
                            best = v;
                            best_mark = b;
                        }
                    }
                    action[used][i][x] = Some(best_mark);
                }
            }
        }
    }
    Ok(Policy {
        instance_name: instance.name.clone(),
        k_total,
        mark_labels: instance.mark_labels.clone(),
        action,
    })
}

/// Exact expected reward of a fixed policy, by backward induction over
/// (node, state, interventions used).  Same-node impulse chains resolve
/// by descending `used`.
pub fn evaluate_policy_exact(instance: &FiniteInstance, policy: &Policy) -> Result<f64> {
    instance.validate()?;
    let n = instance.n_nodes();
    let s = instance.n_states();
    let k = policy.k_total;
    let w = instance.weights();

    // value[used][x] at the node currently being processed
    let mut value = vec![vec![0.0f64; s]; k + 1];
    for i in (0..n).rev() {
        let mut here = vec![vec![0.0f64; s]; k + 1];
        for used in (0..=k).rev() {
            for x in 0..s {
                here[used][x] = match policy.action[used][i][x] {
                    Some(b) if used < k => {
                        let y = instance.impulse[i][x][b];
                        -instance.discount[i] * instance.cost[i][x][b] + here[used + 1][y]
                    }
                    _ if i + 1 < n => {
                        let mut acc = 0.0;
                        let row = &instance.lattice.kernel(i)[x];
                        for y in 0..s {
                            acc += row[y] * (w.absorb[i + 1][y] + w.cont_w[i + 1] * value[used][y]);
                        }
                        w.flow_w[i] * instance.flow[i][x] + acc
                    }
                    _ => 0.0,
                };
            }
        }
        value = here;
    }
    Ok(w.absorb[0][instance.x0] + w.cont_w[0] * value[0][instance.x0])
}

/// Forward policy evaluation.
///
/// Full information: Monte-Carlo over kernel transitions and the horizon
/// draw; the returned histogram counts interventions per path (finite by
/// the domination cap).  Trivial information: the walk is deterministic and
/// the horizon averages out exactly, so the mean is exact and the standard
/// error is zero.
pub fn evaluate_policy(
    instance: &FiniteInstance,
    policy: &Policy,
    n_paths: usize,
    seed: u64,
) -> Result<PolicyEvaluation> {
    instance.validate()?;
    if policy.action.len() != policy.k_total + 1 {
        return Err(Error::InvalidInput("malformed policy table".into()));
    }
    match instance.lattice.info() {
        Information::Trivial => {
            let (value, used) = deterministic_walk(instance, policy)?;
            let mut histogram = vec![0usize; policy.k_total + 1];
            histogram[used] = n_paths.max(1);
            Ok(PolicyEvaluation {
                mean: value,
                stderr: 0.0,
                histogram,
                n_paths: n_paths.max(1),
            })
        }
        Information::Full => {
            let n = instance.n_nodes();
            let g = horizon_mass(instance);
            let mut histogram = vec![0usize; policy.k_total + 1];
            let mut samples = Vec::with_capacity(n_paths);
            for p in 0..n_paths {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                // horizon node for this path (n means "never")
                let eta_node = sample_index(&mut rng, &g).unwrap_or(n);
                let mut x = instance.x0;
                let mut used = 0usize;
                let mut reward = 0.0;
                for i in 0..n {
                    if i == eta_node {
                        if let LatticeHorizon::Random { psi, .. } = &instance.horizon {
                            reward += instance.discount[i] * psi[i][x];
                        }
                        break;
                    }
                    while used < policy.k_total {
                        match policy.action[used][i][x] {
                            Some(b) => {
                                reward -= instance.discount[i] * instance.cost[i][x][b];
                                x = instance.impulse[i][x][b];
                                used += 1;
                            }
                            None => break,
                        }
                    }
                    if i + 1 < n {
                        reward += instance.discount[i] * instance.flow[i][x];
                        let row = &instance.lattice.kernel(i)[x];
                        x = sample_index(&mut rng, row).expect("stochastic row");
                    }
                }
                histogram[used] += 1;
                samples.push(reward);
            }
            let est = crate::sfde::mean_stderr(&samples);
            Ok(PolicyEvaluation {
                mean: est.value,
                stderr: est.stderr,
                histogram,
                n_paths,
            })
        }
    }
}

fn horizon_mass(instance: &FiniteInstance) -> Vec<f64> {
    let mut g = vec![0.0; instance.n_nodes()];
    if let LatticeHorizon::Random { pmf, .. } = &instance.horizon {
        for &(node, p) in pmf {
            g[node] = p;
        }
    }
    g
}

fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return Some(i);
        }
    }
    // float-edge draw: land on the last carried weight
    weights.iter().rposition(|&w| w > 0.0)
}

/// Deterministic forward walk with exact horizon averaging (trivial info).
fn deterministic_walk(instance: &FiniteInstance, policy: &Policy) -> Result<(f64, usize)> {
    if !instance.lattice.is_deterministic() {
        return Err(Error::InvalidInput(
            "deterministic evaluation needs a deterministic kernel".into(),
        ));
    }
    let n = instance.n_nodes();
    let w = instance.weights();
    let mut x = instance.x0;
    let mut used = 0usize;
    let mut value = 0.0;
    for i in 0..n {
        value += w.absorb[i][x];
        while used < policy.k_total {
            match policy.action[used][i][x] {
                Some(b) => {
                    value -= instance.discount[i] * instance.cost[i][x][b];
                    x = instance.impulse[i][x][b];
                    used += 1;
                }
                None => break,
            }
        }
        if i + 1 < n {
            value += w.flow_w[i] * instance.flow[i][x];
            x = instance.lattice.successor(i, x);
        }
    }
    Ok((value, used))
}

/// Random-horizon entry point: value iteration plus policy extraction, with
/// the consistency requirement that no extracted action fires at or after an
/// observable horizon.
pub fn solve_random_horizon(
    instance: &FiniteInstance,
    opts: &SolveOptions,
) -> Result<(LatticeValues, Policy)> {
    if !matches!(instance.horizon, LatticeHorizon::Random { .. }) {
        return Err(Error::InvalidInput(
            "instance does not declare a random horizon".into(),
        ));
    }
    let values = value_iteration(instance, opts)?;
    let policy = extract_policy(instance, &values)?;
    if instance.lattice.info() == Information::Full {
        if let LatticeHorizon::Random { pmf, .. } = &instance.horizon {
            let dead_from = pmf.last().map(|&(node, _)| node).unwrap_or(usize::MAX);
            for (used, per_node) in policy.action.iter().enumerate() {
                for (i, per_state) in per_node.iter().enumerate().skip(dead_from) {
                    if per_state.iter().any(|a| a.is_some()) {
                        return Err(Error::InternalConsistency(format!(
                            "policy intervenes at node {i} (used {used}), at or after the observable horizon"
                        )));
                    }
                }
            }
        }
    }
    Ok((values, policy))
}
