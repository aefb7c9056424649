//! Reward functionals: running rewards, piecewise intervention costs,
//! terminal rewards, discounting, the doubly truncated reward and sampled
//! admissibility diagnostics.
//!
//! The intervention cost is `l(t, x, b) = min_i { l_i(t, x, b) : b in U_i }`
//! over finitely many closed pieces, each bounded below by the positive
//! floor `delta`; discounting multiplies by `exp(-rho(t))`.  In
//! random-horizon mode the realized reward follows the convention that the
//! terminal reward disregards interventions made at or after the horizon
//! (it reads the path under the control truncated strictly before the
//! horizon) while every intervention cost is still charged.

use std::sync::Arc;

use serde::Serialize;

use crate::control::{ImpulseControl, Mark, MarkSet};
use crate::error::{Error, Result};
use crate::path::{CadlagPath, Side};
use crate::sfde::{fit_slope, mean_stderr, simulate_bundle, PathBundle, ProblemSpec};
use crate::control::DyadicGrid;

pub type RunningRewardFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type CostRateFn = Arc<dyn Fn(f64, f64, &Mark) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type DiscountFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One cost piece `(U_i, l_i)`; the effective cost is the min over the
/// pieces whose closed domain contains the mark.
#[derive(Clone)]
pub struct CostPiece {
    pub domain: MarkSet,
    pub rate: CostRateFn,
}

/// Rewards, costs and discounting of a problem.
#[derive(Clone)]
pub struct RewardSpec {
    /// Running reward `phi(t, x)`.
    pub running: RunningRewardFn,
    pub pieces: Vec<CostPiece>,
    /// Terminal reward `psi(t, x)`; random-horizon mode only.
    pub terminal: Option<TerminalFn>,
    /// Discount exponent `rho(t)`, continuous and nondecreasing.
    pub discount: DiscountFn,
    /// Declared discount rate: `rho(t) >= epsilon t` (0 when unknown).
    pub epsilon: f64,
    /// Cost floor `delta > 0`.  A nonpositive value is constructible so the
    /// admissibility report can flag it, but solver entry points reject it.
    pub floor: f64,
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(Error::InvalidInput("need at least one cost piece".into()));
        }
        for piece in &self.pieces {
            piece.domain.validate()?;
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidInput("discount rate must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn discount_factor(&self, t: f64) -> f64 {
        (-(self.discount)(t)).exp()
    }

    /// Undiscounted cost `l(t, x, b)`: min over applicable pieces.  Errors if
    /// the mark lies in no piece or a piece undercuts the declared floor.
    pub fn cost_rate(&self, t: f64, x: f64, b: &Mark) -> Result<f64> {
        let mut best: Option<f64> = None;
        for piece in &self.pieces {
            if piece.domain.contains(b) {
                let v = (piece.rate)(t, x, b);
                best = Some(best.map_or(v, |w: f64| w.min(v)));
            }
        }
        match best {
            None => Err(Error::MarkDomain { mark: b.to_string() }),
            Some(v) if v < self.floor - 1e-12 => Err(Error::InvalidInput(format!(
                "cost rate {v} at t={t} undercuts the declared floor {}",
                self.floor
            ))),
            Some(v) => Ok(v),
        }
    }
}

/// Discounted intervention cost of appending `(t, b)` to a control whose
/// last intervention was at `last_intervention`: the effective time is
/// `t v last_intervention` (composition clamps times upward) and the state
/// is read from the pre-impulse path there.
pub fn cost(
    spec: &RewardSpec,
    t: f64,
    path: &CadlagPath,
    b: &Mark,
    last_intervention: f64,
) -> Result<f64> {
    let s = t.max(last_intervention);
    let x = path.read(s, Side::Right)?;
    Ok(spec.discount_factor(s) * spec.cost_rate(s, x, b)?)
}

/// Left-endpoint quadrature of the discounted running reward over `[0, T]`:
/// nodes `t_i < T` contribute `exp(-rho(t_i)) phi(t_i, X_{t_i})` times the
/// (possibly clipped) cell width.
pub fn running_integral(spec: &RewardSpec, path: &CadlagPath, t_max: f64) -> Result<f64> {
    let grid = path.grid();
    let end = grid.time(grid.n_steps());
    if !(t_max >= 0.0) || t_max > end + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "integration horizon {t_max} outside the simulated range [0, {end}]"
        )));
    }
    let step = grid.step();
    let mut acc = 0.0;
    for i in 0..grid.n_steps() {
        let t = grid.time(i);
        if t >= t_max {
            break;
        }
        let w = step.min(t_max - t);
        acc += spec.discount_factor(t) * (spec.running)(t, path.right_at_node(i)) * w;
    }
    Ok(acc)
}

/// Reward mode of `sample_reward`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Infinite,
    RandomHorizon,
}

/// One realization of the reward functional for the control of `bundle`.
///
/// Infinite mode integrates the running reward to the end of the grid and
/// subtracts every intervention cost (each read off the path under the
/// preceding truncation).  Random-horizon mode integrates to the sampled
/// horizon, adds the terminal reward evaluated on the path under the
/// truncation to the interventions made strictly before the horizon, and
/// still charges every cost.
pub fn sample_reward(
    problem: &ProblemSpec,
    bundle: &PathBundle,
    mode: RewardMode,
) -> Result<f64> {
    let spec = &problem.rewards;
    let u = &bundle.control;
    if bundle.paths.len() != u.len() + 1 {
        return Err(Error::InvalidInput(
            "bundle must hold one path per control truncation".into(),
        ));
    }
    let controlled = bundle.controlled();
    let t_end = controlled.grid().time(controlled.grid().n_steps());

    let mut costs = 0.0;
    for (j, iv) in u.interventions().iter().enumerate() {
        // path under [u]_{j-1}: pre-impulse state for the j-th intervention
        let pre = &bundle.paths[j];
        let x = pre.read(iv.t, Side::Right)?;
        costs += spec.discount_factor(iv.t) * spec.cost_rate(iv.t, x, &iv.b)?;
    }

    match mode {
        RewardMode::Infinite => Ok(running_integral(spec, controlled, t_end)? - costs),
        RewardMode::RandomHorizon => {
            let eta = bundle.eta.ok_or_else(|| {
                Error::InvalidInput("random-horizon reward needs a sampled horizon".into())
            })?;
            let psi = spec.terminal.as_ref().ok_or_else(|| {
                Error::InvalidInput("random-horizon reward needs a terminal reward".into())
            })?;
            let eta_c = eta.min(t_end);
            // interventions strictly before the horizon shape the terminal state
            let n_before = u.interventions().iter().filter(|iv| iv.t < eta_c).count();
            let x_eta = bundle.paths[n_before].read(eta_c, Side::Right)?;
            let terminal = spec.discount_factor(eta_c) * psi(eta_c, x_eta);
            Ok(running_integral(spec, controlled, eta_c)? + terminal - costs)
        }
    }
}

/// State clamp of the double truncation: `^L x = (L / (L v |x|)) x`.
pub fn clamp_state(l: f64, x: f64) -> f64 {
    l / l.max(x.abs()) * x
}

/// The doubly truncated reward of appending `(t, b)` between `v` and `u`:
/// running reward to `t_cut` with states clamped at `l_clamp`, minus the
/// costs of `u`'s interventions falling strictly before `t_cut`.
///
/// `bundle` must be the truncation bundle of `v o (t, b) o u`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_psi(
    problem: &ProblemSpec,
    v: &ImpulseControl,
    u: &ImpulseControl,
    t: f64,
    b: &Mark,
    t_cut: f64,
    l_clamp: f64,
    bundle: &PathBundle,
) -> Result<f64> {
    if !(t_cut > 0.0) || !(l_clamp > 0.0) {
        return Err(Error::InvalidInput("truncation parameters must be positive".into()));
    }
    let spec = &problem.rewards;
    let composed = v.compose(&ImpulseControl::single(t, b.clone())).compose(u);
    if bundle.control != composed || bundle.paths.len() != composed.len() + 1 {
        return Err(Error::InvalidInput(
            "bundle does not match the composed control".into(),
        ));
    }
    let controlled = bundle.controlled();
    let grid = controlled.grid();
    let t_end = grid.time(grid.n_steps());
    let step = grid.step();

    // running part with the state clamp
    let mut acc = 0.0;
    for i in 0..grid.n_steps() {
        let s = grid.time(i);
        if s >= t_cut.min(t_end) {
            break;
        }
        let w = step.min(t_cut - s);
        let x = clamp_state(l_clamp, controlled.right_at_node(i));
        acc += spec.discount_factor(s) * (spec.running)(s, x) * w;
    }

    // cost part: u's interventions with effective time strictly before t_cut
    let offset = v.len() + 1;
    for j in 0..u.len() {
        let iv = &composed.interventions()[offset + j];
        if iv.t >= t_cut {
            break;
        }
        let pre = &bundle.paths[offset + j];
        let x = clamp_state(l_clamp, pre.read(iv.t, Side::Right)?);
        acc -= spec.discount_factor(iv.t) * spec.cost_rate(iv.t, x, &iv.b)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub t: f64,
    /// `sup_u E[ |phi(u o v_T) - phi(u)|^2 ]` with a probe intervention at T.
    pub sup_sq_diff: f64,
}

/// Sampled diagnostics for the admissible-reward-pair conditions.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    /// Max over the control family of `E[phi(u)^2]`.
    pub phi_second_moment: f64,
    /// Max over the family of `E[c(u)^2]` (last-intervention cost).
    pub cost_second_moment: f64,
    pub tail: Vec<TailRow>,
    /// Fitted exponential decay rate of the tail rows.
    pub fitted_rate: Option<f64>,
    /// Fitted log-constant: `ln sup_sq_diff ~ fitted_log_c - rate * T`.
    pub fitted_log_c: Option<f64>,
    pub declared_epsilon: f64,
    pub flags: Vec<String>,
    pub pass: bool,
}

impl AdmissibilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Estimates the second moments of reward and cost over a control family and
/// the decay of the future's impact: for each horizon in `t_list` a probe
/// intervention is pushed past it and `sup_u E|phi(u o v_T) - phi(u)|^2` is
/// measured with common random numbers, then fitted to `C e^{-rate T}`.
pub fn admissibility_report(
    problem: &ProblemSpec,
    grid: &DyadicGrid,
    family: &[ImpulseControl],
    t_list: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<AdmissibilityReport> {
    problem.validate()?;
    if family.is_empty() {
        return Err(Error::InvalidInput("need a nonempty control family".into()));
    }
    let spec = &problem.rewards;
    let t_end = grid.time(grid.n_steps());
    let mut flags = Vec::new();
    if !(spec.floor > 0.0) {
        flags.push("cost floor violated: delta <= 0".into());
    }

    let probe = problem.marks.search_points()[0].clone();
    let mut phi_sq: f64 = 0.0;
    let mut cost_sq: f64 = 0.0;
    let mut tail = Vec::with_capacity(t_list.len());
    let mut sq_diffs = vec![vec![0.0f64; family.len()]; t_list.len()];

    for (ui, u) in family.iter().enumerate() {
        let mut phi_samples = Vec::with_capacity(n_paths);
        let mut cost_samples = Vec::with_capacity(n_paths);
        let mut diff_samples = vec![Vec::with_capacity(n_paths); t_list.len()];
        for p in 0..n_paths {
            let bundle = simulate_bundle(problem, u, grid, seed, p as u64)?;
            let phi_u = running_integral(spec, bundle.controlled(), t_end)?;
            phi_samples.push(phi_u * phi_u);
            if let Some(last) = u.interventions().last() {
                let pre = &bundle.paths[u.len() - 1];
                let x = pre.read(last.t, Side::Right)?;
                let c = spec.discount_factor(last.t) * spec.cost_rate(last.t, x, &last.b)?;
                cost_samples.push(c * c);
            }
            for (ti, &t_probe) in t_list.iter().enumerate() {
                let pushed = u.compose(&ImpulseControl::single(grid.snap(t_probe), probe.clone()));
                let pushed_bundle = simulate_bundle(problem, &pushed, grid, seed, p as u64)?;
                let phi_pushed = running_integral(spec, pushed_bundle.controlled(), t_end)?;
                let d = phi_pushed - phi_u;
                diff_samples[ti].push(d * d);
            }
        }
        phi_sq = phi_sq.max(mean_stderr(&phi_samples).value);
        if !cost_samples.is_empty() {
            cost_sq = cost_sq.max(mean_stderr(&cost_samples).value);
        }
        for (ti, samples) in diff_samples.iter().enumerate() {
            sq_diffs[ti][ui] = mean_stderr(samples).value;
        }
    }

    for (ti, &t_probe) in t_list.iter().enumerate() {
        let sup = sq_diffs[ti].iter().fold(0.0f64, |a, &v| a.max(v));
        tail.push(TailRow {
            t: t_probe,
            sup_sq_diff: sup,
        });
    }
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|r| r.sup_sq_diff > 0.0)
        .map(|r| (r.t, r.sup_sq_diff.ln()))
        .collect();
    let slope = fit_slope(&pts);
    let fitted_rate = slope.map(|s| -s);
    // intercept of the log-linear fit: ln sup ~ log_c + slope * T
    let fitted_log_c = slope.map(|s| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        my - s * mx
    });
    match fitted_rate {
        Some(r) if r > 0.01 => {}
        _ => flags.push("no tail decay detected".into()),
    }
    let pass = flags.is_empty();
    Ok(AdmissibilityReport {
        phi_second_moment: phi_sq,
        cost_second_moment: cost_sq,
        tail,
        fitted_rate,
        fitted_log_c,
        declared_epsilon: spec.epsilon,
        flags,
        pass,
    })
}
