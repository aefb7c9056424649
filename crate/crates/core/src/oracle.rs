//! Ground-truth engines for desk-scale problems.
//!
//! `FiniteInstance` describes an impulse-control problem on a finite lattice:
//! per-node flow rewards, intervention cost and impulse-transition tables, a
//! finite mark set, discount factors and a horizon mode (infinite, or a
//! random horizon supported on grid nodes).  `brute_force_value` solves it by
//! exhaustive dynamic programming over an intervention-count state, and
//! `enumerate_controls_value` cross-checks small cases by direct enumeration
//! of all control tuples.  `example_value` is the closed-form reward curve of
//! the two-point random-horizon instance whose supremum `(e - 1)/2` is not
//! attained.
//!
//! The backward inductions here are written as standalone loops and share no
//! numerical kernels with the solver; agreement between the two code paths
//! is part of the verification suite.

use serde::{Deserialize, Serialize};

use crate::control::{ImpulseControl, Intervention, Mark};
use crate::error::{Error, Result};
use crate::snell::{Information, LatticeModel};

/// Largest `(nodes x states x (k+1))` table the oracle will build.
pub const ORACLE_TABLE_CAP: usize = 20_000_000;

/// Largest number of enumerated control tuples.
pub const ENUMERATION_CAP: usize = 20_000_000;

/// Horizon mode of a finite instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LatticeHorizon {
    /// Truncated infinite horizon: nothing accrues past the last node.
    Infinite,
    /// Random horizon supported on grid nodes.  `pmf` lists `(node, prob)`
    /// with probabilities summing to one; `psi[i][x]` is the terminal reward
    /// collected if the horizon ends at node `i` in (pre-impulse) state `x`.
    Random { pmf: Vec<(usize, f64)>, psi: Vec<Vec<f64>> },
}

/// An impulse-control problem on a finite lattice.
///
/// Value semantics (all rewards discounted to time zero by `discount`):
///
/// ```text
/// J(u) = E[ sum_{i < n, horizon > t_i} d_i flow[i][X_i]
///           + d_eta psi[eta][X_eta^pre]            (random horizon only)
///           - sum_j d_{i_j} cost[i_j][X^pre_j][b_j] ]
/// ```
///
/// where `X_i` is the post-impulse state at node `i`, `X^pre` the state
/// before the impulses applied at that node (simultaneous impulses compose
/// sequentially), and — matching the convention that the terminal reward
/// disregards interventions made at the horizon — `psi` reads the
/// pre-impulse state.  With full information the horizon is observable and
/// no rational controller intervenes at or after it; with trivial
/// information interventions are charged regardless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub name: String,
    pub lattice: LatticeModel,
    /// Node times, for reporting and control round-trips.
    pub times: Vec<f64>,
    pub x0: usize,
    /// Mark labels in ascending order; index order is the tie-break order.
    pub mark_labels: Vec<f64>,
    /// `flow[i][x]`: running reward earned when continuing from node `i`.
    pub flow: Vec<Vec<f64>>,
    /// `cost[i][x][b] >= cost_floor > 0`, undiscounted.
    pub cost: Vec<Vec<Vec<f64>>>,
    /// `impulse[i][x][b]`: post-impulse state index.
    pub impulse: Vec<Vec<Vec<usize>>>,
    /// `discount[i] = exp(-rho(t_i))`.
    pub discount: Vec<f64>,
    /// Default bound on the number of interventions.
    pub k_max: usize,
    pub horizon: LatticeHorizon,
    pub cost_floor: f64,
}

/// Per-node weights translating the horizon mode into backward-induction
/// coefficients.  These are part of the instance's meaning and are consumed
/// by both the solver and the oracle.
#[derive(Debug, Clone)]
pub struct HorizonWeights {
    /// Multiplier on `flow[i][x]` (discount and survival already folded in).
    pub flow_w: Vec<f64>,
    /// `absorb[i][x]`: value collected on arrival at node `i` before any
    /// decision (the terminal-reward branch of a random horizon).
    pub absorb: Vec<Vec<f64>>,
    /// Weight of the decision value on arrival at node `i`.
    pub cont_w: Vec<f64>,
}

impl FiniteInstance {
    pub fn n_nodes(&self) -> usize {
        self.lattice.n_nodes()
    }

    pub fn n_states(&self) -> usize {
        self.lattice.n_states()
    }

    pub fn n_marks(&self) -> usize {
        self.mark_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.revalidate()?;
        let n = self.n_nodes();
        let s = self.n_states();
        let m = self.n_marks();
        if self.times.len() != n {
            return Err(Error::InvalidInput("times must have one entry per node".into()));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("node times must strictly increase".into()));
        }
        if self.x0 >= s {
            return Err(Error::InvalidInput("initial state out of range".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInput("mark set is empty".into()));
        }
        if self.mark_labels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("mark labels must strictly increase".into()));
        }
        if !(self.cost_floor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost floor {} must be strictly positive",
                self.cost_floor
            )));
        }
        if self.flow.len() != n - 1 || self.flow.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidInput(
                "flow table must be (nodes - 1) x states".into(),
            ));
        }
        if self.discount.len() != n
            || self
                .discount
                .iter()
                .any(|&d| !(d > 0.0) || !(d <= 1.0) || !d.is_finite())
        {
            return Err(Error::InvalidInput(
                "discount factors must lie in (0, 1], one per node".into(),
            ));
        }
        if self.cost.len() != n
            || self
                .cost
                .iter()
                .any(|r| r.len() != s || r.iter().any(|c| c.len() != m))
        {
            return Err(Error::InvalidInput("cost table must be nodes x states x marks".into()));
        }
        for row in self.cost.iter().flatten().flatten() {
            if !(*row >= self.cost_floor) {
                return Err(Error::InvalidInput(format!(
                    "cost {row} lies below the floor {}",
                    self.cost_floor
                )));
            }
        }
        if self.impulse.len() != n
            || self
                .impulse
                .iter()
                .any(|r| r.len() != s || r.iter().any(|c| c.len() != m))
        {
            return Err(Error::InvalidInput(
                "impulse table must be nodes x states x marks".into(),
            ));
        }
        if self.impulse.iter().flatten().flatten().any(|&y| y >= s) {
            return Err(Error::InvalidInput("impulse target state out of range".into()));
        }
        match &self.horizon {
            LatticeHorizon::Infinite => {}
            LatticeHorizon::Random { pmf, psi } => {
                if pmf.is_empty() {
                    return Err(Error::InvalidInput("random horizon needs a pmf".into()));
                }
                let mut total = 0.0;
                let mut prev: Option<usize> = None;
                for &(node, p) in pmf {
                    if node >= n {
                        return Err(Error::InvalidInput(format!(
                            "horizon pmf node {node} out of range"
                        )));
                    }
                    if let Some(q) = prev {
                        if node <= q {
                            return Err(Error::InvalidInput(
                                "horizon pmf nodes must strictly increase".into(),
                            ));
                        }
                    }
                    prev = Some(node);
                    if !(p >= 0.0) {
                        return Err(Error::InvalidInput("horizon pmf has a negative mass".into()));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "horizon pmf sums to {total}, not 1"
                    )));
                }
                if psi.len() != n || psi.iter().any(|r| r.len() != s) {
                    return Err(Error::InvalidInput(
                        "terminal reward table must be nodes x states".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Probability mass of the horizon per node (zeros when infinite).
    fn horizon_pmf(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_nodes()];
        if let LatticeHorizon::Random { pmf, .. } = &self.horizon {
            for &(node, p) in pmf {
                g[node] = p;
            }
        }
        g
    }

    /// Translates the horizon mode and information structure into the
    /// per-node backward-induction weights described on [`HorizonWeights`].
    pub fn weights(&self) -> HorizonWeights {
        let n = self.n_nodes();
        let s = self.n_states();
        let g = self.horizon_pmf();
        let psi = match &self.horizon {
            LatticeHorizon::Random { psi, .. } => Some(psi),
            LatticeHorizon::Infinite => None,
        };
        let mut flow_w = vec![0.0; n - 1];
        let mut absorb = vec![vec![0.0; s]; n];
        let mut cont_w = vec![1.0; n];
        match self.lattice.info() {
            Information::Full => {
                // observable horizon: condition on survival node by node
                let mut survival = 1.0; // P(eta >= t_i)
                for i in 0..n {
                    let hazard = if survival > 0.0 { (g[i] / survival).min(1.0) } else { 1.0 };
                    cont_w[i] = 1.0 - hazard;
                    if let Some(psi) = psi {
                        for x in 0..s {
                            absorb[i][x] = hazard * self.discount[i] * psi[i][x];
                        }
                    }
                    if i < n - 1 {
                        flow_w[i] = self.discount[i];
                    }
                    survival -= g[i];
                }
            }
            Information::Trivial => {
                // unobservable horizon: unconditional weights, decisions are
                // taken (and paid for) whether or not the horizon has passed
                let mut seen = 0.0;
                for i in 0..n {
                    if let Some(psi) = psi {
                        for x in 0..s {
                            absorb[i][x] = g[i] * self.discount[i] * psi[i][x];
                        }
                    }
                    seen += g[i];
                    if i < n - 1 {
                        flow_w[i] = (1.0 - seen) * self.discount[i];
                    }
                }
            }
        }
        HorizonWeights {
            flow_w,
            absorb,
            cont_w,
        }
    }

    /// Bound `B` with every achievable value in `[-B, B]` (costs only make
    /// values smaller), used for the intervention cap.
    pub fn value_bound(&self) -> f64 {
        let w = self.weights();
        let mut b = 0.0;
        for i in 0..self.n_nodes() - 1 {
            let m = self.flow[i].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            b += w.flow_w[i].abs() * m;
        }
        for row in &w.absorb {
            b += row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        }
        b
    }

    /// Cap on useful interventions: each one costs at least the smallest
    /// discounted floor while the total gain is bounded by `2 B`, so any
    /// strategy using more interventions is dominated by doing nothing.
    pub fn intervention_cap(&self) -> usize {
        let d_min = self
            .discount
            .iter()
            .fold(f64::INFINITY, |a, &d| a.min(d));
        let b = self.value_bound();
        ((2.0 * b) / (d_min * self.cost_floor)).ceil() as usize + 1
    }

    pub fn load_json(text: &str) -> Result<Self> {
        let inst: FiniteInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Converts node/mark indices to an `ImpulseControl` in instance units.
    pub fn control_from_indices(&self, picks: &[(usize, usize)]) -> ImpulseControl {
        ImpulseControl::new(
            picks
                .iter()
                .map(|&(i, b)| Intervention {
                    t: self.times[i],
                    b: Mark::scalar(self.mark_labels[b]),
                })
                .collect(),
        )
        .expect("indices are grid-ordered")
    }
}

/// Exhaustive dynamic programming tables, indexed by interventions REMAINING.
#[derive(Debug, Clone)]
pub struct BruteForce {
    /// `values[j][i][x]`: decision value at node `i`, state `x`, with at most
    /// `j` further interventions (absorbed terminal branch excluded).
    pub values: Vec<Vec<Vec<f64>>>,
    /// `actions[j][i][x]`: `Some(mark)` where intervening is (weakly) better.
    pub actions: Vec<Vec<Vec<Option<usize>>>>,
    /// Total value at the root per remaining-intervention count.
    pub value0: Vec<f64>,
}

/// Exact backward DP with an intervention-count state:
///
/// ```text
/// V_j(i, x) = max( continue_j(i, x),
///                  max_b { -d_i cost[i][x][b] + V_{j-1}(i, impulse[i][x][b]) } )
/// ```
///
/// Written independently of the solver's Snell-envelope path on purpose.
pub fn brute_force_value(instance: &FiniteInstance, k: usize) -> Result<BruteForce> {
    instance.validate()?;
    let n = instance.n_nodes();
    let s = instance.n_states();
    let m = instance.n_marks();
    if n * s * (k + 1) > ORACLE_TABLE_CAP {
        return Err(Error::OracleCap(format!(
            "{n} nodes x {s} states x {} intervention levels",
            k + 1
        )));
    }
    let w = instance.weights();
    let mut values = vec![vec![vec![0.0f64; s]; n]; k + 1];
    let mut actions = vec![vec![vec![None; s]; n]; k + 1];

    for i in (0..n).rev() {
        for j in 0..=k {
            for x in 0..s {
                // continuation branch
                let cont = if i == n - 1 {
                    0.0
                } else {
                    let mut acc = 0.0;
                    let kernel_row = &instance.lattice.kernel(i)[x];
                    for y in 0..s {
                        acc += kernel_row[y] * (w.absorb[i + 1][y] + w.cont_w[i + 1] * values[j][i + 1][y]);
                    }
                    w.flow_w[i] * instance.flow[i][x] + acc
                };
                // intervention branch
                let mut best_mark = None;
                let mut best = f64::NEG_INFINITY;
                if j > 0 {
                    for b in 0..m {
                        let y = instance.impulse[i][x][b];
                        let v = -instance.discount[i] * instance.cost[i][x][b] + values[j - 1][i][y];
                        if v > best {
                            best = v;
                            best_mark = Some(b);
                        }
                    }
                }
                if j > 0 && best >= cont {
                    values[j][i][x] = best.max(cont);
                    actions[j][i][x] = best_mark;
                } else {
                    values[j][i][x] = cont;
                    actions[j][i][x] = None;
                }
            }
        }
    }

    let value0 = (0..=k)
        .map(|j| w.absorb[0][instance.x0] + w.cont_w[0] * values[j][0][instance.x0])
        .collect();
    Ok(BruteForce {
        values,
        actions,
        value0,
    })
}

/// Exact value of one open-loop control, specified as `(node, mark)` picks in
/// nondecreasing node order (equal nodes compose sequentially).
pub fn evaluate_open_loop(instance: &FiniteInstance, picks: &[(usize, usize)]) -> Result<f64> {
    if !instance.lattice.is_deterministic() {
        return Err(Error::InvalidInput(
            "open-loop evaluation requires a deterministic transition kernel".into(),
        ));
    }
    if matches!(instance.horizon, LatticeHorizon::Random { .. })
        && instance.lattice.info() == Information::Full
    {
        return Err(Error::InvalidInput(
            "open-loop enumeration is meaningless under an observable random horizon".into(),
        ));
    }
    if picks.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(Error::InvalidInput("picks must be in node order".into()));
    }
    let n = instance.n_nodes();
    let w = instance.weights();

    // forward pass: record the pre-impulse state and the costs at each node
    let mut pre_state = vec![0usize; n];
    let mut node_costs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut post_state = vec![0usize; n];
    let mut x = instance.x0;
    let mut next_pick = 0;
    for i in 0..n {
        pre_state[i] = x;
        while next_pick < picks.len() && picks[next_pick].0 == i {
            let b = picks[next_pick].1;
            node_costs[i].push(instance.discount[i] * instance.cost[i][x][b]);
            x = instance.impulse[i][x][b];
            next_pick += 1;
        }
        post_state[i] = x;
        if i < n - 1 {
            x = instance.lattice.successor(i, x);
        }
    }

    // backward accumulation in the same association as the dynamic program,
    // so values agree with it bitwise on deterministic kernels
    let mut value = 0.0;
    for i in (0..n).rev() {
        if i < n - 1 {
            value = w.flow_w[i] * instance.flow[i][post_state[i]]
                + (w.absorb[i + 1][pre_state[i + 1]] + w.cont_w[i + 1] * value);
        }
        for &c in node_costs[i].iter().rev() {
            value = -c + value;
        }
    }
    Ok(w.absorb[0][pre_state[0]] + w.cont_w[0] * value)
}

/// Result of exhaustive control enumeration.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub value: f64,
    /// Every maximizing control (exact value ties), in lexicographic order.
    pub optimal: Vec<ImpulseControl>,
}

/// Direct enumeration of all controls with at most `k <= 2` interventions on
/// grid nodes.  Must equal `brute_force_value` restricted to `k` on every
/// instance it accepts.
pub fn enumerate_controls_value(instance: &FiniteInstance, k: usize) -> Result<Enumeration> {
    instance.validate()?;
    if k > 2 {
        return Err(Error::InvalidInput("enumeration supports k <= 2".into()));
    }
    let n = instance.n_nodes();
    let m = instance.n_marks();
    let singles = n * m;
    let total = 1 + singles + if k >= 2 { singles * (singles + 1) / 2 } else { 0 };
    if total > ENUMERATION_CAP {
        return Err(Error::OracleCap(format!("{total} controls to enumerate")));
    }

    let mut best = f64::NEG_INFINITY;
    let mut optimal: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut consider = |picks: &[(usize, usize)], value: f64| {
        if value > best {
            best = value;
            optimal = vec![picks.to_vec()];
        } else if value == best {
            optimal.push(picks.to_vec());
        }
    };

    consider(&[], evaluate_open_loop(instance, &[])?);
    if k >= 1 {
        for i in 0..n {
            for b in 0..m {
                consider(&[(i, b)], evaluate_open_loop(instance, &[(i, b)])?);
            }
        }
    }
    if k >= 2 {
        for i in 0..n {
            for b in 0..m {
                for j in i..n {
                    for c in 0..m {
                        // same-node impulses act sequentially, so ordered
                        // pairs differ; visit each ordered pair exactly once
                        if j == i && c < b {
                            continue;
                        }
                        let picks = [(i, b), (j, c)];
                        consider(&picks, evaluate_open_loop(instance, &picks)?);
                        if j == i && c != b {
                            let swapped = [(i, c), (j, b)];
                            consider(&swapped, evaluate_open_loop(instance, &swapped)?);
                        }
                    }
                }
            }
        }
    }

    Ok(Enumeration {
        value: best,
        optimal: optimal
            .into_iter()
            .map(|p| instance.control_from_indices(&p))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Closed-form example: two-point random horizon, singleton mark set
// ---------------------------------------------------------------------------

/// Closed-form reward of intervening once at time `tau` in the two-point
/// random-horizon instance: horizon 1 or 2 with probability 1/2 each, state
/// jumping from 0 to 1 at the intervention, terminal reward `x e^{|t-1|}`,
/// intervention cost `e^{|t-1|}`, no running reward, no discounting.  The
/// terminal reward disregards interventions made at the horizon itself, so
/// the curve jumps down at `tau = 1`; doing nothing is worth 0.
pub fn example_value(tau: f64) -> f64 {
    assert!(tau >= 0.0, "intervention time must be nonnegative");
    let e = std::f64::consts::E;
    if tau < 1.0 {
        0.5 * (1.0 + e) - (1.0 - tau).exp()
    } else if tau == 1.0 {
        0.5 * e - 1.0
    } else if tau < 2.0 {
        0.5 * e - (tau - 1.0).exp()
    } else {
        -(tau - 1.0).exp()
    }
}

/// The supremum `0.5 (e - 1)` of [`example_value`]; approached as `tau`
/// increases to 1 but attained by no control.
pub fn example_supremum() -> f64 {
    0.5 * (std::f64::consts::E - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snell::Information;

    /// Two states, one step; intervening at node 0 costs 1 and turns a
    /// terminal reward of 0 into 5.  Hand DP: V(0, ., 1) = max(0, -1+5) = 4.
    pub(crate) fn single_step_instance() -> FiniteInstance {
        let kernel = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        FiniteInstance {
            name: "single_step".into(),
            lattice: LatticeModel::new(2, vec![kernel], Information::Trivial).unwrap(),
            times: vec![0.0, 1.0],
            x0: 0,
            mark_labels: vec![1.0],
            flow: vec![vec![0.0, 0.0]],
            cost: vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]],
            impulse: vec![vec![vec![1], vec![1]], vec![vec![1], vec![1]]],
            discount: vec![1.0, 1.0],
            k_max: 1,
            horizon: LatticeHorizon::Random {
                pmf: vec![(1, 1.0)],
                psi: vec![vec![0.0, 0.0], vec![0.0, 5.0]],
            },
            cost_floor: 1.0,
        }
    }

    #[test]
    fn never_profitable_instance_never_intervenes() {
        // phi == 0 and costs > 0: value 0, no interventions anywhere
        let mut inst = single_step_instance();
        inst.horizon = LatticeHorizon::Infinite;
        let bf = brute_force_value(&inst, 2).unwrap();
        assert!(bf.value0.iter().all(|&v| v == 0.0));
        assert!(bf
            .actions
            .iter()
            .flatten()
            .flatten()
            .all(|a| a.is_none()));
        let en = enumerate_controls_value(&inst, 1).unwrap();
        assert_eq!(en.value, 0.0);
        assert!(en.optimal.contains(&ImpulseControl::empty()));
    }

    #[test]
    fn single_step_hand_dp() {
        let inst = single_step_instance();
        let bf = brute_force_value(&inst, 1).unwrap();
        assert_eq!(bf.value0[1], 4.0, "hand DP gives max(0, -1 + 5) = 4");
        assert_eq!(bf.actions[1][0][0], Some(0), "intervene at node 0");
        let en = enumerate_controls_value(&inst, 1).unwrap();
        assert_eq!(en.value, 4.0);
        assert_eq!(en.optimal.len(), 1);
        assert_eq!(en.optimal[0], inst.control_from_indices(&[(0, 0)]));
    }

    #[test]
    fn zero_interventions_slice_is_pure_expectation() {
        // j = 0 slice equals the conditional expectation of rewards
        let kernel = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let inst = FiniteInstance {
            name: "expectation".into(),
            lattice: LatticeModel::stationary(kernel.clone(), 2, Information::Full).unwrap(),
            times: vec![0.0, 1.0, 2.0],
            x0: 0,
            mark_labels: vec![0.0],
            flow: vec![vec![1.0, -2.0], vec![0.5, 0.25]],
            cost: vec![vec![vec![1.0]; 2]; 3],
            impulse: vec![vec![vec![0], vec![0]]; 3],
            discount: vec![1.0, 0.9, 0.8],
            k_max: 0,
            horizon: LatticeHorizon::Infinite,
            cost_floor: 1.0,
        };
        let bf = brute_force_value(&inst, 0).unwrap();
        // independent hand computation of E[sum d_i flow_i]
        let e1 = [0.9 * 0.5, 0.9 * 0.25];
        let e0 = [
            1.0 * 1.0 + 0.3 * e1[0] + 0.7 * e1[1],
            1.0 * -2.0 + 0.6 * e1[0] + 0.4 * e1[1],
        ];
        assert!((bf.value0[0] - e0[0]).abs() < 1e-15);
    }

    #[test]
    fn symmetric_marks_report_both_optima() {
        // two marks with identical costs and identical effect
        let kernel = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let inst = FiniteInstance {
            name: "symmetric".into(),
            lattice: LatticeModel::new(2, vec![kernel], Information::Trivial).unwrap(),
            times: vec![0.0, 1.0],
            x0: 0,
            mark_labels: vec![-1.0, 1.0],
            flow: vec![vec![0.0, 2.0]],
            cost: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]; 2],
            impulse: vec![vec![vec![1, 1], vec![1, 1]]; 2],
            discount: vec![1.0, 1.0],
            k_max: 1,
            horizon: LatticeHorizon::Infinite,
            cost_floor: 0.5,
        };
        let en = enumerate_controls_value(&inst, 1).unwrap();
        assert_eq!(en.value, 1.5);
        assert_eq!(en.optimal.len(), 2, "both marks are optimal");
    }

    #[test]
    fn enumeration_matches_brute_force_up_to_two() {
        let inst = single_step_instance();
        for k in 0..=1 {
            let bf = brute_force_value(&inst, k).unwrap();
            let en = enumerate_controls_value(&inst, k).unwrap();
            assert_eq!(bf.value0[k], en.value, "k = {k}");
        }
    }

    #[test]
    fn brute_force_values_monotone_and_capped() {
        let inst = single_step_instance();
        let cap = inst.intervention_cap();
        let bf = brute_force_value(&inst, cap + 1).unwrap();
        for j in 1..bf.value0.len() {
            assert!(bf.value0[j] >= bf.value0[j - 1]);
        }
        assert_eq!(
            bf.value0[cap],
            bf.value0[cap + 1],
            "values must be constant past the domination cap"
        );
    }

    #[test]
    fn oversized_instances_hit_the_cap() {
        let inst = single_step_instance();
        let err = brute_force_value(&inst, ORACLE_TABLE_CAP).unwrap_err();
        assert!(matches!(err, Error::OracleCap(_)), "{err}");
    }

    #[test]
    fn example_closed_form_spot_values() {
        let e = std::f64::consts::E;
        assert!((example_value(0.0) - 0.5 * (1.0 - e)).abs() < 1e-15);
        assert!((example_value(1.0) - (0.5 * e - 1.0)).abs() < 1e-15);
        assert!((example_value(2.0) + e).abs() < 1e-15);
        // approached but not attained; intervening just before 1 beats
        // intervening at 1 whenever e^h < 3/2, i.e. h < ln(1.5)
        for h in [0.4, 0.25, 0.1, 1e-3, 1e-6] {
            assert!(example_value(1.0 - h) < example_supremum());
            assert!(example_value(1.0 - h) > example_value(1.0));
        }
        assert!(
            example_value(1.0 - 0.5) < example_value(1.0),
            "past h = ln(1.5) the grid optimum moves to tau = 1"
        );
        // strictly increasing on [0, 1)
        let mut prev = example_value(0.0);
        for i in 1..100 {
            let v = example_value(i as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn observable_random_horizon_rejects_enumeration() {
        let mut inst = single_step_instance();
        // same instance but with full information: enumeration must refuse
        inst.lattice = LatticeModel::new(
            2,
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            Information::Full,
        )
        .unwrap();
        assert!(enumerate_controls_value(&inst, 1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = single_step_instance();
        let json = inst.to_json().unwrap();
        let back = FiniteInstance::load_json(&json).unwrap();
        assert_eq!(back.name, inst.name);
        assert_eq!(
            brute_force_value(&back, 1).unwrap().value0,
            brute_force_value(&inst, 1).unwrap().value0
        );
    }
}
