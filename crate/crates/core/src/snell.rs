//! Discrete-time Snell envelopes on finite lattices and on simulated paths.
//!
//! The exact engine computes the smallest supermartingale `Z` dominating a
//! payoff process `X` by backward induction, `Z_t = max(X_t, E[Z_{t+1} | .])`,
//! together with the first-contact optimal stopping rule and the Doob-Meyer
//! decomposition `Z = M - K`.  A generalized variant adds per-step flow
//! rewards and node-weights; it is the engine behind the impulse-control
//! value iteration.
//!
//! The regression engine estimates the same envelope on a bundle of
//! simulated paths by backward least squares of realized continuation values
//! on basis functions (re-fit per step, ridge-regularized).
//!
//! Attainment of the envelope by the first-contact rule needs, in continuous
//! time, a quasi-left-continuity condition on the payoff; that condition has
//! no discrete-time content and is assumed throughout.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::{CadlagPath, FeatureSpec};

/// Row-stochasticity tolerance for transition kernels.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Information available to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Information {
    /// Decisions may condition on the full lattice state.
    Full,
    /// Trivial filtration: the controller observes nothing, so decisions are
    /// functions of time only.  Requires a deterministic transition kernel.
    Trivial,
}

/// A finite filtered lattice: `n` transition steps over a fixed state set.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct LatticeModel {
    n_states: usize,
    /// `kernels[i][x][y]` = P(state y at step i+1 | state x at step i).
    kernels: Vec<Vec<Vec<f64>>>,
    info: Information,
}

impl LatticeModel {
    pub fn new(n_states: usize, kernels: Vec<Vec<Vec<f64>>>, info: Information) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidInput("lattice needs at least one state".into()));
        }
        if kernels.is_empty() {
            return Err(Error::InvalidInput("lattice needs at least one step".into()));
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.len() != n_states {
                return Err(Error::InvalidInput(format!(
                    "kernel {i} has {} rows, expected {n_states}",
                    k.len()
                )));
            }
            for (x, row) in k.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::InvalidInput(format!(
                        "kernel {i} row {x} has wrong width"
                    )));
                }
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "kernel {i} row {x} has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidInput(format!(
                        "kernel {i} row {x} sums to {sum}, not 1"
                    )));
                }
            }
        }
        let model = LatticeModel {
            n_states,
            kernels,
            info,
        };
        if info == Information::Trivial && !model.is_deterministic() {
            return Err(Error::InvalidInput(
                "trivial-information mode requires a deterministic transition kernel".into(),
            ));
        }
        Ok(model)
    }

    /// Stationary lattice repeating one kernel for `n_steps` steps.
    pub fn stationary(kernel: Vec<Vec<f64>>, n_steps: usize, info: Information) -> Result<Self> {
        let n_states = kernel.len();
        LatticeModel::new(n_states, vec![kernel; n_steps], info)
    }

    /// Re-runs the construction checks; used after deserialization.
    pub fn revalidate(&self) -> Result<()> {
        LatticeModel::new(self.n_states, self.kernels.clone(), self.info).map(|_| ())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Number of transition steps; nodes are `0..=n_steps`.
    pub fn n_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.kernels.len() + 1
    }

    pub fn info(&self) -> Information {
        self.info
    }

    pub fn kernel(&self, step: usize) -> &Vec<Vec<f64>> {
        &self.kernels[step]
    }

    pub fn is_deterministic(&self) -> bool {
        self.kernels
            .iter()
            .all(|k| k.iter().all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0)))
    }

    /// Deterministic successor of `x` at `step` (kernel row must be 0/1).
    pub fn successor(&self, step: usize, x: usize) -> usize {
        self.kernels[step][x]
            .iter()
            .position(|&p| p == 1.0)
            .expect("deterministic kernel row")
    }

    /// `E[v(X_{step+1}) | X_step = x]`, summed in ascending state order.
    pub fn expect_next(&self, step: usize, x: usize, v: &[f64]) -> f64 {
        dot(&self.kernels[step][x], v)
    }
}

/// Fixed-order dot product; every backward pass uses this same reduction so
/// monotonicity arguments carry over to floating point verbatim.
#[inline]
pub(crate) fn dot(w: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.len() {
        acc += w[i] * v[i];
    }
    acc
}

/// Exact Snell envelope on a lattice.
#[derive(Debug, Clone, Serialize)]
pub struct ExactEnvelope {
    /// `values[t][x]` = Z_t(x).
    pub values: Vec<Vec<f64>>,
    /// The payoff it envelopes.
    pub payoff: Vec<Vec<f64>>,
    /// `cond_exp[t][x]` = E[Z_{t+1} | X_t = x] for t < n.
    pub cond_exp: Vec<Vec<f64>>,
}

/// Envelope estimate: exact arrays or regression coefficients.
#[derive(Debug, Clone)]
pub enum EnvelopeEstimate {
    Exact(ExactEnvelope),
    Regression(RegressionEnvelope),
}

impl EnvelopeEstimate {
    pub fn as_exact(&self) -> Result<&ExactEnvelope> {
        match self {
            EnvelopeEstimate::Exact(e) => Ok(e),
            EnvelopeEstimate::Regression(_) => Err(Error::InvalidInput(
                "operation requires an exact-mode envelope".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            EnvelopeEstimate::Exact(e) => Ok(serde_json::to_string_pretty(e)?),
            EnvelopeEstimate::Regression(r) => Ok(serde_json::to_string_pretty(&r.export())?),
        }
    }
}

/// Exact backward induction: `Z_n = X_n`, `Z_t = max(X_t, E[Z_{t+1} | .])`.
///
/// `payoff[t][x]` must be finite for every node.
pub fn snell_backward(lattice: &LatticeModel, payoff: &[Vec<f64>]) -> Result<EnvelopeEstimate> {
    check_table(lattice, payoff, lattice.n_nodes(), "payoff")?;
    let n = lattice.n_steps();
    let zeros = vec![vec![0.0; lattice.n_states()]; n];
    let result = backward_induction(
        lattice,
        Some(payoff),
        &zeros,
        None,
        None,
        &payoff[n],
    );
    Ok(EnvelopeEstimate::Exact(ExactEnvelope {
        values: result.values,
        payoff: payoff.to_vec(),
        cond_exp: result.continues_raw,
    }))
}

pub struct BackwardResult {
    /// `values[t][x]`: the envelope (decision value) at each node.
    pub values: Vec<Vec<f64>>,
    /// Continuation branch at each node (terminal row = terminal_continue).
    pub continues: Vec<Vec<f64>>,
    /// Raw conditional expectations E[. | x] before flow/weights (t < n).
    pub continues_raw: Vec<Vec<f64>>,
}

/// Generalized backward recursion with flow rewards and node weights:
///
/// ```text
/// V_n(x) = max(obstacle_n(x), terminal_continue(x))
/// V_t(x) = max(obstacle_t(x),
///              flow_t(x) + sum_y P_t(x,y) [absorb_{t+1}(y) + w_{t+1} V_{t+1}(y)])
/// ```
///
/// With zero flow/absorb, unit weights and `obstacle = payoff`,
/// `terminal_continue = payoff_n` this is the plain Snell envelope.  The
/// `absorb` term collects value paid on arrival at a node before any
/// decision is taken (e.g. a terminal reward weighted by the probability
/// that a random horizon ends there); `w` scales the remaining decision
/// value (e.g. by a survival probability).  When `obstacle` is `None` the
/// recursion is a pure conditional expectation.
pub fn backward_induction(
    lattice: &LatticeModel,
    obstacle: Option<&[Vec<f64>]>,
    flow: &[Vec<f64>],
    absorb: Option<&[Vec<f64>]>,
    cont_weight: Option<&[f64]>,
    terminal_continue: &[f64],
) -> BackwardResult {
    let n = lattice.n_steps();
    let s = lattice.n_states();
    let mut values = vec![vec![0.0; s]; n + 1];
    let mut continues = vec![vec![0.0; s]; n + 1];
    let mut continues_raw = vec![vec![0.0; s]; n];

    for x in 0..s {
        let c = terminal_continue[x];
        continues[n][x] = c;
        values[n][x] = match obstacle {
            Some(o) => o[n][x].max(c),
            None => c,
        };
    }
    // backward in time; within a step the per-state loop is order-free
    for t in (0..n).rev() {
        // value seen from step t when arriving at step t+1
        let arrived: Vec<f64> = (0..s)
            .map(|y| {
                let w = cont_weight.map_or(1.0, |cw| cw[t + 1]);
                let a = absorb.map_or(0.0, |ab| ab[t + 1][y]);
                a + w * values[t + 1][y]
            })
            .collect();
        for x in 0..s {
            let raw = dot(&lattice.kernel(t)[x], &arrived);
            continues_raw[t][x] = raw;
            let c = flow[t][x] + raw;
            continues[t][x] = c;
            values[t][x] = match obstacle {
                Some(o) => o[t][x].max(c),
                None => c,
            };
        }
    }
    BackwardResult {
        values,
        continues,
        continues_raw,
    }
}

/// First-contact stopping rule `tau* = inf{ s >= t : Z_s = X_s }` (ties stop).
#[derive(Debug, Clone, Serialize)]
pub struct StoppingRule {
    /// `stop[t][x]` is true where the payoff attains the envelope.
    pub stop: Vec<Vec<bool>>,
}

/// Extracts the optimal stopping rule from an exact envelope.  Stopping is
/// declared where the payoff is at least the continuation value, so ties
/// resolve to "stop", matching the infimum in the first-contact time.
pub fn optimal_stop(envelope: &EnvelopeEstimate) -> Result<StoppingRule> {
    let e = envelope.as_exact()?;
    let n = e.values.len() - 1;
    let stop = (0..=n)
        .map(|t| {
            (0..e.values[t].len())
                .map(|x| {
                    if t == n {
                        true
                    } else {
                        e.payoff[t][x] >= e.cond_exp[t][x]
                    }
                })
                .collect()
        })
        .collect();
    Ok(StoppingRule { stop })
}

/// Expected payoff collected by following `rule`, per initial state.  Used to
/// check attainment `E[X_{tau*}] = Z_0`.
pub fn expected_payoff_under(
    lattice: &LatticeModel,
    payoff: &[Vec<f64>],
    rule: &StoppingRule,
) -> Vec<f64> {
    let n = lattice.n_steps();
    let s = lattice.n_states();
    let mut w = payoff[n].clone();
    for t in (0..n).rev() {
        let mut next = vec![0.0; s];
        for x in 0..s {
            next[x] = if rule.stop[t][x] {
                payoff[t][x]
            } else {
                dot(&lattice.kernel(t)[x], &w)
            };
        }
        w = next;
    }
    w
}

/// Doob-Meyer decomposition `Z = M - K` of an exact envelope.
///
/// `K` is predictable with per-step increments `K_{t+1} - K_t =
/// Z_t - E[Z_{t+1} | F_t] >= 0` read off at the state occupied at `t`;
/// `M` is the martingale `Z + K`.
#[derive(Debug, Clone, Serialize)]
pub struct DoobMeyer {
    /// `k_inc[t][x]` = K_{t+1} - K_t given X_t = x (t < n).
    pub k_inc: Vec<Vec<f64>>,
    /// `cond_exp[t][x]` = E[Z_{t+1} | X_t = x].
    pub cond_exp: Vec<Vec<f64>>,
}

impl DoobMeyer {
    /// Martingale increment `M_{t+1} - M_t` along a transition `x -> y`.
    pub fn m_increment(&self, z: &[Vec<f64>], t: usize, _x: usize, y: usize) -> f64 {
        z[t + 1][y] - self.cond_exp[t][_x]
    }

    /// Cumulative `K` along a state path (one state per node).
    pub fn k_along(&self, states: &[usize]) -> Vec<f64> {
        let mut k = vec![0.0; states.len()];
        for t in 1..states.len() {
            k[t] = k[t - 1] + self.k_inc[t - 1][states[t - 1]];
        }
        k
    }
}

pub fn doob_meyer(envelope: &EnvelopeEstimate) -> Result<DoobMeyer> {
    let e = envelope.as_exact()?;
    let n = e.values.len() - 1;
    let mut k_inc = Vec::with_capacity(n);
    for t in 0..n {
        let row: Vec<f64> = (0..e.values[t].len())
            .map(|x| e.values[t][x] - e.cond_exp[t][x])
            .collect();
        k_inc.push(row);
    }
    Ok(DoobMeyer {
        k_inc,
        cond_exp: e.cond_exp.clone(),
    })
}

fn check_table(
    lattice: &LatticeModel,
    table: &[Vec<f64>],
    expected_rows: usize,
    what: &str,
) -> Result<()> {
    if table.len() != expected_rows {
        return Err(Error::InvalidInput(format!(
            "{what} has {} rows, expected {expected_rows}",
            table.len()
        )));
    }
    for (t, row) in table.iter().enumerate() {
        if row.len() != lattice.n_states() {
            return Err(Error::InvalidInput(format!("{what} row {t} has wrong width")));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{what} row {t} has a non-finite entry"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Regression mode
// ---------------------------------------------------------------------------

/// Basis functions over path features for the regression engine.
#[derive(Clone)]
pub enum Basis {
    /// All monomials of total degree `<= degree` in the extracted features
    /// (the constant is always included).
    Polynomial { features: FeatureSpec, degree: usize },
    /// Arbitrary user basis evaluated at (path, node).
    Custom(Arc<dyn Fn(&CadlagPath, usize) -> Vec<f64> + Send + Sync>),
}

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Basis::Polynomial { features, degree } => f
                .debug_struct("Polynomial")
                .field("features", features)
                .field("degree", degree)
                .finish(),
            Basis::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Basis {
    pub fn eval(&self, path: &CadlagPath, node: usize) -> Vec<f64> {
        match self {
            Basis::Polynomial { features, degree } => {
                monomials(&features.extract(path, node), *degree)
            }
            Basis::Custom(f) => f(path, node),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Basis::Polynomial { features, degree } => {
                format!("polynomial(degree={degree}, features={})", features.len())
            }
            Basis::Custom(_) => "custom".into(),
        }
    }

    pub fn len_for(&self, path: &CadlagPath, node: usize) -> usize {
        self.eval(path, node).len()
    }
}

/// All monomials of total degree <= `degree` over `vars`, constant first,
/// in a fixed deterministic order.
pub fn monomials(vars: &[f64], degree: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut frontier = vec![(1.0, 0usize)]; // (value, min var index allowed next)
    for _ in 0..degree {
        let mut next = Vec::new();
        for &(v, lo) in &frontier {
            for (j, &x) in vars.iter().enumerate().skip(lo) {
                let m = v * x;
                out.push(m);
                next.push((m, j));
            }
        }
        frontier = next;
    }
    out
}

/// Fitted least-squares system: coefficients, the Cholesky factor of the
/// regularized normal matrix and the sandwich "meat" matrix for
/// heteroskedasticity-robust prediction standard errors.
pub(crate) struct RidgeFit {
    pub beta: Vec<f64>,
    pub bumped: bool,
    pub chol: Cholesky<f64, nalgebra::Dyn>,
    /// `sum_p phi_p phi_p^T r_p^2` with `r_p` the fit residuals.
    pub meat: DMatrix<f64>,
}

impl RidgeFit {
    /// Sandwich standard error of the fitted value at a basis vector; larger
    /// residuals near the design edges inflate it there, so it also reflects
    /// local misspecification and not just sampling noise.
    pub fn prediction_stderr(&self, phi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(phi);
        let solved = self.chol.solve(&v);
        let var = (&self.meat * &solved).dot(&solved);
        var.max(0.0).sqrt()
    }
}

/// Ridge-regularized least squares.  The ridge is applied relative to the
/// largest diagonal entry of the normal matrix; a singular system escalates
/// the ridge twice before giving up, and the escalation is reported.
pub(crate) fn fit_ridge_full(
    design: &[Vec<f64>],
    targets: &[f64],
    ridge: f64,
) -> Result<RidgeFit> {
    let rows = design.len();
    let cols = design[0].len();
    let mut g = DMatrix::<f64>::zeros(cols, cols);
    let mut b = DVector::<f64>::zeros(cols);
    for (row, &y) in design.iter().zip(targets.iter()) {
        for i in 0..cols {
            b[i] += row[i] * y;
            for j in i..cols {
                g[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    let scale = (0..cols).map(|i| g[(i, i)]).fold(0.0f64, f64::max).max(1.0);
    let mut bumped = false;
    let mut lambda = ridge.max(0.0);
    for attempt in 0..3 {
        let mut gr = g.clone();
        for i in 0..cols {
            gr[(i, i)] += lambda * scale;
        }
        if let Some(chol) = Cholesky::new(gr) {
            let beta = chol.solve(&b);
            if beta.iter().all(|v| v.is_finite()) {
                let mut meat = DMatrix::<f64>::zeros(cols, cols);
                for (row, &y) in design.iter().zip(targets.iter()) {
                    let fitted = row.iter().zip(beta.iter()).map(|(a, c)| a * c).sum::<f64>();
                    let r2 = (y - fitted) * (y - fitted);
                    for i in 0..cols {
                        for j in i..cols {
                            meat[(i, j)] += row[i] * row[j] * r2;
                        }
                    }
                }
                for i in 0..cols {
                    for j in 0..i {
                        meat[(i, j)] = meat[(j, i)];
                    }
                }
                return Ok(RidgeFit {
                    beta: beta.iter().copied().collect(),
                    bumped,
                    chol,
                    meat,
                });
            }
        }
        bumped = true;
        lambda = if lambda == 0.0 { 1e-8 } else { lambda * 1e3 };
        if attempt == 2 {
            break;
        }
    }
    Err(Error::Regression(format!(
        "normal equations singular for {rows} samples x {cols} basis functions"
    )))
}

pub(crate) fn fit_ridge(design: &[Vec<f64>], targets: &[f64], ridge: f64) -> Result<(Vec<f64>, bool)> {
    let fit = fit_ridge_full(design, targets, ridge)?;
    Ok((fit.beta, fit.bumped))
}

/// Regression-mode envelope: per-date continuation coefficients.
#[derive(Debug, Clone)]
pub struct RegressionEnvelope {
    /// Grid node index of each decision date.
    pub dates: Vec<usize>,
    /// Continuation coefficients per date except the last.
    pub coefs: Vec<Vec<f64>>,
    pub basis: Basis,
    pub value0: f64,
    pub stderr: f64,
    /// Dates where the ridge had to be escalated.
    pub ridge_bumped: Vec<usize>,
    /// Per-path envelope values at date 0.
    pub values0_per_path: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionEnvelopeExport {
    pub dates: Vec<usize>,
    pub basis: String,
    pub coefs: Vec<Vec<f64>>,
    pub value0: f64,
    pub stderr: f64,
    pub ridge_bumped: Vec<usize>,
}

impl RegressionEnvelope {
    pub fn export(&self) -> RegressionEnvelopeExport {
        RegressionEnvelopeExport {
            dates: self.dates.clone(),
            basis: self.basis.describe(),
            coefs: self.coefs.clone(),
            value0: self.value0,
            stderr: self.stderr,
            ridge_bumped: self.ridge_bumped.clone(),
        }
    }

    /// Fitted continuation value at a date (indexed into `dates`).
    pub fn continuation(&self, date_idx: usize, path: &CadlagPath) -> f64 {
        let phi = self.basis.eval(path, self.dates[date_idx]);
        dot(&self.coefs[date_idx], &phi)
    }
}

/// Least-squares Monte-Carlo estimate of the Snell envelope of the sampled
/// payoff process `payoff[date][path]` observed at the given grid nodes.
///
/// Requires at least ten paths per basis function.
pub fn snell_regression(
    paths: &[CadlagPath],
    dates: &[usize],
    payoff: &[Vec<f64>],
    basis: &Basis,
    ridge: f64,
) -> Result<EnvelopeEstimate> {
    let n_paths = paths.len();
    let n_dates = dates.len();
    if n_dates < 2 {
        return Err(Error::InvalidInput("need at least two decision dates".into()));
    }
    if payoff.len() != n_dates || payoff.iter().any(|row| row.len() != n_paths) {
        return Err(Error::InvalidInput(
            "payoff table must be dates x paths".into(),
        ));
    }
    let n_basis = basis.len_for(&paths[0], dates[0]);
    if n_paths < 10 * n_basis {
        return Err(Error::InvalidInput(format!(
            "{n_paths} paths for {n_basis} basis functions; need at least 10x more paths"
        )));
    }

    // realized-rollout targets: wherever the fitted rule continues, the
    // pathwise realization replaces the fitted value, so fit bias does not
    // compound across dates and the final estimate carries a real standard
    // error
    let mut realized: Vec<f64> = payoff[n_dates - 1].clone();
    let mut coefs = vec![Vec::new(); n_dates - 1];
    let mut ridge_bumped = Vec::new();
    for i in (0..n_dates - 1).rev() {
        let design: Vec<Vec<f64>> = paths.iter().map(|p| basis.eval(p, dates[i])).collect();
        let (beta, bumped) = fit_ridge(&design, &realized, ridge)?;
        if bumped {
            ridge_bumped.push(i);
        }
        for p in 0..n_paths {
            let fitted = dot(&beta, &design[p]);
            if payoff[i][p] >= fitted {
                realized[p] = payoff[i][p];
            }
        }
        coefs[i] = beta;
    }
    ridge_bumped.reverse();

    let value0 = realized.iter().sum::<f64>() / n_paths as f64;
    let var = realized
        .iter()
        .map(|v| (v - value0) * (v - value0))
        .sum::<f64>()
        / (n_paths.saturating_sub(1)) as f64;
    let stderr = (var / n_paths as f64).sqrt();

    Ok(EnvelopeEstimate::Regression(RegressionEnvelope {
        dates: dates.to_vec(),
        coefs,
        basis: basis.clone(),
        value0,
        stderr,
        ridge_bumped,
        values0_per_path: realized,
    }))
}
