//! Least-squares Monte-Carlo backend of the value iteration.
//!
//! Stage surfaces are continuation-value regressions over path features,
//! re-fit per decision date (ridge-regularized); the intervention obstacle
//! re-simulates one impulse step and reads the previous stage's fitted
//! surface at the post-impulse features.  Simultaneous impulses resolve by
//! recursing through the stage index.
//!
//! Two approximations are inherent and reported rather than hidden: the
//! conditioning on the full pre-impulse history collapses to the configured
//! feature vector, and fitted surfaces only generalize where the training
//! paths put mass.  Training paths can start from a dispersed initial state
//! (`initial_dispersion`) so the date-0 surface is identified at
//! post-impulse states; evaluation paths always start at the problem's
//! initial state.  The reported value of a solve is the forward Monte-Carlo
//! evaluation of the extracted rule on fresh paths.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use super::{ConvergenceRow, PolicyEvaluation};
use crate::control::{DyadicGrid, Mark};
use crate::error::{Error, Result};
use crate::path::{CadlagPath, FeatureSpec, PathRead};
use crate::sfde::{
    mean_stderr, Estimate, HorizonMode, NoiseRealization, PathView, ProblemSpec, Stepper,
};
use crate::snell::{dot, fit_ridge_full, monomials, Information};

#[derive(Debug, Clone, Serialize)]
pub struct RegressionOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub k_max: usize,
    /// Convergence threshold on the stage increment; `None` stops once the
    /// increment falls below one standard error of the stage value.
    pub tol: Option<f64>,
    pub features: FeatureSpec,
    /// Total degree of the monomial basis over the features.
    pub degree: usize,
    pub ridge: f64,
    /// Decision dates sit every `date_stride` grid nodes.
    pub date_stride: usize,
    /// Forward-evaluation paths for the reported value.
    pub eval_paths: usize,
    /// Half-width of the uniform initial-state dispersion of the training
    /// paths (0 trains from the exact initial state).
    pub initial_dispersion: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            n_paths: 10_000,
            seed: 1,
            k_max: 3,
            tol: None,
            features: FeatureSpec::default(),
            degree: 3,
            ridge: 1e-8,
            date_stride: 1,
            eval_paths: 10_000,
            initial_dispersion: 0.0,
        }
    }
}

/// One Picard stage: fitted continuation coefficients per decision date
/// (none for the last date) and the stage value at the root.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionStage {
    pub coefs: Vec<Vec<f64>>,
    pub value0: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionValues {
    pub problem_name: String,
    pub dates: Vec<usize>,
    pub features: FeatureSpec,
    pub degree: usize,
    pub stages: Vec<RegressionStage>,
    /// Sup over (date, path) of the stage increment.
    pub increments: Vec<f64>,
    /// Min over (date, path) of the stage increment (monotonicity check).
    pub min_increments: Vec<f64>,
    /// Min over fitted nodes of `increment + 3 (se_k + se_{k-1})` with the
    /// per-node prediction standard errors; nonnegative margins mean the
    /// stage monotonicity holds within three standard errors everywhere.
    pub mono_margin_min: Vec<f64>,
    pub warnings: Vec<String>,
    /// Timing lives only in the convergence CSV so the JSON artifacts stay
    /// byte-identical across reruns.
    #[serde(skip)]
    pub convergence: Vec<ConvergenceRow>,
    pub converged_at: Option<usize>,
}

impl RegressionValues {
    pub fn k_used(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionSolution {
    pub values: RegressionValues,
    /// Forward evaluation of the extracted rule on fresh paths; this is the
    /// headline value and standard error.
    pub forward: PolicyEvaluation,
}

/// Per-date horizon weights (see the lattice backend for the derivation).
struct DateWeights {
    /// Conditional death probability at each date (observable horizon).
    hazard: Vec<f64>,
    cont_w: Vec<f64>,
}

fn date_weights(problem: &ProblemSpec, grid: &DyadicGrid, dates: &[usize]) -> Result<DateWeights> {
    let mut hazard = vec![0.0; dates.len()];
    let mut cont_w = vec![1.0; dates.len()];
    if let HorizonMode::Random { support } = &problem.horizon {
        let mut mass = vec![0.0; dates.len()];
        for &(t, p) in support {
            let node = grid.node_index(t)?;
            match dates.iter().position(|&d| d == node) {
                Some(i) => mass[i] += p,
                None => {
                    return Err(Error::InvalidInput(format!(
                        "horizon support time {t} is not a decision date"
                    )))
                }
            }
        }
        let mut survival = 1.0;
        for i in 0..dates.len() {
            let h = if survival > 0.0 { (mass[i] / survival).min(1.0) } else { 1.0 };
            hazard[i] = h;
            cont_w[i] = 1.0 - h;
            survival -= mass[i];
        }
    }
    Ok(DateWeights { hazard, cont_w })
}

/// Evaluates fitted stage surfaces, obstacles and post-impulse states.
struct SurfaceEval<'a> {
    problem: &'a ProblemSpec,
    grid: &'a DyadicGrid,
    dates: &'a [usize],
    features: &'a FeatureSpec,
    degree: usize,
    marks: Vec<Mark>,
}

impl<'a> SurfaceEval<'a> {
    fn basis<P: PathRead + ?Sized>(&self, path: &P, node: usize, state: Option<f64>) -> Vec<f64> {
        let mut f = self.features.extract_read(path, node);
        if let Some(y) = state {
            // the leading feature is the current value by construction
            f[0] = y;
        }
        monomials(&f, self.degree)
    }

    /// Stage value `max(continuation, obstacle, previous stage)` at a date,
    /// optionally at an overridden current state (post-impulse reads).  The
    /// previous-stage floor is the monotone-in-k reuse: the true stages
    /// increase pointwise, so flooring the estimate by the earlier stages is
    /// a valid (and variance-reducing) estimator.
    fn value<P: PathRead + ?Sized>(
        &self,
        stages: &[RegressionStage],
        k: usize,
        di: usize,
        path: &P,
        state: Option<f64>,
    ) -> Result<f64> {
        let cont = if di + 1 < self.dates.len() {
            dot(&stages[k].coefs[di], &self.basis(path, self.dates[di], state))
        } else {
            0.0
        };
        if k == 0 {
            return Ok(cont);
        }
        let (obstacle, _) = self.obstacle(stages, k, di, path, state)?;
        let floor = self.value(stages, k - 1, di, path, state)?;
        Ok(cont.max(obstacle).max(floor))
    }

    /// Best intervention value and its (smallest-tie) mark index.
    fn obstacle<P: PathRead + ?Sized>(
        &self,
        stages: &[RegressionStage],
        k: usize,
        di: usize,
        path: &P,
        state: Option<f64>,
    ) -> Result<(f64, usize)> {
        debug_assert!(k >= 1);
        let node = self.dates[di];
        let t = self.grid.time(node);
        let discount = self.problem.rewards.discount_factor(t);
        let x = state.unwrap_or_else(|| path.node_value(node));
        // one re-simulated impulse step: the impulse map reads the observed
        // history with the current state overridden
        let mut right: Vec<f64> = (0..=node).map(|i| path.node_value(i)).collect();
        right[node] = x;
        let mut best = f64::NEG_INFINITY;
        let mut best_mark = 0;
        for (bi, b) in self.marks.iter().enumerate() {
            let view = PathView::from_parts(self.grid.step(), &right, &self.problem.pre_history);
            let y = (self.problem.coefficients.impulse)(t, &view, b);
            let bound = self.problem.growth.impulse_bound.max(x.abs());
            if !y.is_finite() || y.abs() > bound * (1.0 + 1e-9) + 1e-9 {
                return Err(Error::GrowthBound { t, value: y.abs(), bound });
            }
            let cost = discount * self.problem.rewards.cost_rate(t, x, b)?;
            let v = -cost + self.value(stages, k - 1, di, path, Some(y))?;
            if v > best {
                best = v;
                best_mark = bi;
            }
        }
        Ok((best, best_mark))
    }
}

fn n_basis(features: &FeatureSpec, degree: usize) -> usize {
    monomials(&vec![0.0; features.len()], degree).len()
}

fn validate(problem: &ProblemSpec, opts: &RegressionOptions) -> Result<()> {
    problem.validate()?;
    if problem.information != Information::Full {
        return Err(Error::InvalidInput(
            "the regression backend needs full information; use the exact lattice for the trivial filtration".into(),
        ));
    }
    if !opts.features.include_value {
        return Err(Error::InvalidInput(
            "regression features must include the current value".into(),
        ));
    }
    if matches!(problem.horizon, HorizonMode::Random { .. }) && problem.rewards.terminal.is_none() {
        return Err(Error::InvalidInput("random horizon needs a terminal reward".into()));
    }
    let nb = n_basis(&opts.features, opts.degree);
    if opts.n_paths < 10 * nb {
        return Err(Error::InvalidInput(format!(
            "{} paths for {nb} basis functions; need at least 10x more paths",
            opts.n_paths
        )));
    }
    Ok(())
}

fn decision_dates(grid: &DyadicGrid, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || grid.n_steps() % stride != 0 {
        return Err(Error::InvalidInput(format!(
            "date stride {stride} does not divide the {}-step grid",
            grid.n_steps()
        )));
    }
    Ok((0..=grid.n_steps()).step_by(stride).collect())
}

/// Picard iteration in regression mode.
pub fn value_iteration(
    problem: &ProblemSpec,
    grid: &DyadicGrid,
    opts: &RegressionOptions,
) -> Result<RegressionValues> {
    validate(problem, opts)?;
    let dates = decision_dates(grid, opts.date_stride)?;
    let n_dates = dates.len();
    let weights = date_weights(problem, grid, &dates)?;
    let p_count = opts.n_paths;
    let mut warnings = Vec::new();

    // training bundle (optionally dispersed initial states)
    let mut paths: Vec<CadlagPath> = Vec::with_capacity(p_count);
    {
        let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ 0x0d15_9e85);
        for p in 0..p_count {
            let noise = NoiseRealization::for_grid(problem, opts.seed, p as u64, grid);
            let x0 = if opts.initial_dispersion > 0.0 {
                problem.x0 + opts.initial_dispersion * (2.0 * rng.random::<f64>() - 1.0)
            } else {
                problem.x0
            };
            let mut stepper = Stepper::with_initial(problem, grid, &noise, x0)?;
            for _ in 0..grid.n_steps() {
                stepper.step()?;
            }
            paths.push(stepper.finish()?);
        }
    }

    let eval = SurfaceEval {
        problem,
        grid,
        dates: &dates,
        features: &opts.features,
        degree: opts.degree,
        marks: problem.marks.search_points(),
    };

    // per-(date, path) caches: basis rows, interval flow, death payout
    let bases: Vec<Vec<Vec<f64>>> = (0..n_dates)
        .map(|i| paths.iter().map(|p| eval.basis(p, dates[i], None)).collect())
        .collect();
    let step = grid.step();
    let spec = &problem.rewards;
    let flowstep: Vec<Vec<f64>> = (0..n_dates - 1)
        .map(|i| {
            paths
                .iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for node in dates[i]..dates[i + 1] {
                        let t = grid.time(node);
                        acc += spec.discount_factor(t)
                            * (spec.running)(t, p.right_at_node(node))
                            * step;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let absorb: Vec<Vec<f64>> = (0..n_dates)
        .map(|i| {
            let t = grid.time(dates[i]);
            let h = weights.hazard[i];
            paths
                .iter()
                .map(|p| match (&spec.terminal, h) {
                    (Some(psi), h) if h > 0.0 => {
                        h * spec.discount_factor(t) * psi(t, p.right_at_node(dates[i]))
                    }
                    _ => 0.0,
                })
                .collect()
        })
        .collect();

    let mut stages: Vec<RegressionStage> = Vec::new();
    let mut y_prev: Vec<Vec<f64>> = Vec::new();
    let mut se_prev: Vec<Vec<f64>> = Vec::new();
    let mut increments = Vec::new();
    let mut min_increments = Vec::new();
    let mut mono_margin_min = Vec::new();
    let mut convergence = Vec::new();
    let mut converged_at = None;

    for k in 0..=opts.k_max {
        let stage_start = Instant::now();
        let mut coefs: Vec<Vec<f64>> = vec![Vec::new(); n_dates - 1];
        // fitted-surface values (policy/increment diagnostics) and realized
        // rollout values (regression targets; replacing the fitted value by
        // the pathwise realization wherever the rule continues keeps the fit
        // bias from compounding across dates)
        let mut y = vec![vec![0.0f64; p_count]; n_dates];
        let mut se = vec![vec![0.0f64; p_count]; n_dates];
        let mut rollout = vec![0.0f64; p_count];

        // last date: continuing is worth nothing; intervening only costs
        for p in 0..p_count {
            y[n_dates - 1][p] = if k == 0 {
                0.0
            } else {
                let (obs, _) = eval.obstacle(&stages, k, n_dates - 1, &paths[p], None)?;
                obs.max(0.0).max(y_prev[n_dates - 1][p])
            };
            rollout[p] = y[n_dates - 1][p];
        }

        let mut value0 = Estimate { value: 0.0, stderr: 0.0 };
        for i in (0..n_dates - 1).rev() {
            let targets: Vec<f64> = (0..p_count)
                .map(|p| {
                    flowstep[i][p] + absorb[i + 1][p] + weights.cont_w[i + 1] * rollout[p]
                })
                .collect();
            let beta = if i == 0 && opts.initial_dispersion == 0.0 {
                // every training path starts at the same state: the exact
                // regression at the root is the plain mean
                let est = mean_stderr(&targets);
                let mut beta = vec![0.0; bases[0][0].len()];
                beta[0] = est.value;
                for p in 0..p_count {
                    se[0][p] = est.stderr;
                }
                beta
            } else {
                let fit = fit_ridge_full(&bases[i], &targets, opts.ridge)?;
                if fit.bumped {
                    warnings.push(format!("stage {k}: ridge escalated at date {i}"));
                }
                for p in 0..p_count {
                    se[i][p] = fit.prediction_stderr(&bases[i][p]);
                }
                fit.beta
            };
            for p in 0..p_count {
                let cont = dot(&beta, &bases[i][p]);
                if k == 0 {
                    y[i][p] = cont;
                    rollout[p] = targets[p];
                } else {
                    let (obs, _) = eval.obstacle(&stages, k, i, &paths[p], None)?;
                    // monotone-in-k reuse: the previous stage floors the
                    // surface (true stages increase pointwise)
                    y[i][p] = cont.max(obs).max(y_prev[i][p]);
                    // the rule stops (intervenes) where the obstacle beats
                    // the fitted continuation; its realized value is the
                    // obstacle read, otherwise the realized continuation
                    rollout[p] = if obs >= cont { obs } else { targets[p] };
                }
            }
            if i == 0 {
                let est = mean_stderr(&rollout);
                value0 = Estimate {
                    value: est.value,
                    stderr: est.stderr,
                };
            }
            coefs[i] = beta;
        }

        let mut sup = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        if k > 0 {
            let mut margin = f64::INFINITY;
            for i in 0..n_dates {
                for p in 0..p_count {
                    let d = y[i][p] - y_prev[i][p];
                    sup = sup.max(d);
                    min = min.min(d);
                    margin = margin.min(d + 3.0 * (se[i][p] + se_prev[i][p]));
                }
            }
            increments.push(sup);
            min_increments.push(min);
            mono_margin_min.push(margin);
            if margin < 0.0 {
                warnings.push(format!(
                    "stage {k} decreased a node by more than 3 prediction stderr (margin {margin:.3e})"
                ));
            }
        }
        stages.push(RegressionStage { coefs, value0 });
        convergence.push(ConvergenceRow {
            k,
            sup_increment: if k == 0 { f64::NAN } else { sup },
            wall_time: stage_start.elapsed().as_secs_f64(),
        });
        y_prev = y;
        se_prev = se;
        if k > 0 {
            let tol = opts.tol.unwrap_or(stages[k].value0.stderr);
            if sup < tol || sup == 0.0 {
                converged_at = Some(k);
                break;
            }
        }
    }

    Ok(RegressionValues {
        problem_name: problem.name.clone(),
        dates,
        features: opts.features.clone(),
        degree: opts.degree,
        stages,
        increments,
        min_increments,
        mono_margin_min,
        warnings,
        convergence,
        converged_at,
    })
}

/// Forward Monte-Carlo evaluation of the fitted rule on fresh paths: at each
/// decision date intervene while the obstacle is at least the fitted
/// continuation, reading surfaces along the controlled path being built.
pub fn evaluate_policy(
    problem: &ProblemSpec,
    grid: &DyadicGrid,
    values: &RegressionValues,
    n_paths: usize,
    seed: u64,
) -> Result<PolicyEvaluation> {
    let dates = &values.dates;
    let k_total = values.k_used();
    let eval = SurfaceEval {
        problem,
        grid,
        dates,
        features: &values.features,
        degree: values.degree,
        marks: problem.marks.search_points(),
    };
    let weights = date_weights(problem, grid, dates)?;
    let spec = &problem.rewards;
    let step = grid.step();

    let mut samples = Vec::with_capacity(n_paths);
    let mut histogram = vec![0usize; k_total + 1];
    for p in 0..n_paths {
        let noise = NoiseRealization::for_grid(problem, seed, p as u64, grid);
        // observable horizon sampled per path (date index; usize::MAX never)
        let eta_date = match &problem.horizon {
            HorizonMode::Infinite => usize::MAX,
            HorizonMode::Random { support } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                rng.set_stream(p as u64);
                let draw: f64 = rng.random();
                let mut acc = 0.0;
                let mut node = grid.node_index(support[support.len() - 1].0)?;
                for &(t, prob) in support {
                    acc += prob;
                    if draw < acc {
                        node = grid.node_index(t)?;
                        break;
                    }
                }
                dates.iter().position(|&d| d == node).ok_or_else(|| {
                    Error::InvalidInput("horizon support off the decision dates".into())
                })?
            }
        };

        let mut stepper = Stepper::new(problem, grid, &noise)?;
        let mut reward = 0.0;
        let mut used = 0usize;
        let mut date_ptr = 0usize;
        let mut dead = false;
        for node in 0..=grid.n_steps() {
            if date_ptr < dates.len() && dates[date_ptr] == node {
                let t = grid.time(node);
                if date_ptr == eta_date {
                    if let Some(psi) = &spec.terminal {
                        reward += spec.discount_factor(t) * psi(t, stepper.current());
                    }
                    dead = true;
                    break;
                }
                debug_assert!(weights.cont_w[date_ptr] > 0.0 || date_ptr + 1 == dates.len());
                while used < k_total {
                    let k_left = k_total - used;
                    let (obstacle, mark_idx) = {
                        let view = stepper.view();
                        eval.obstacle(&values.stages, k_left, date_ptr, &view, None)?
                    };
                    let cont = if date_ptr + 1 < dates.len() {
                        let view = stepper.view();
                        dot(
                            &values.stages[k_left].coefs[date_ptr],
                            &eval.basis(&view, node, None),
                        )
                    } else {
                        0.0
                    };
                    if obstacle >= cont {
                        let b = eval.marks[mark_idx].clone();
                        let x_pre = stepper.current();
                        reward -= spec.discount_factor(t) * spec.cost_rate(t, x_pre, &b)?;
                        stepper.apply_impulse_now(&b)?;
                        used += 1;
                    } else {
                        break;
                    }
                }
                date_ptr += 1;
            }
            if node < grid.n_steps() {
                let t = grid.time(node);
                reward += spec.discount_factor(t) * (spec.running)(t, stepper.current()) * step;
                stepper.step()?;
            }
        }
        let _ = dead;
        histogram[used] += 1;
        samples.push(reward);
    }
    let est = mean_stderr(&samples);
    Ok(PolicyEvaluation {
        mean: est.value,
        stderr: est.stderr,
        histogram,
        n_paths,
    })
}

/// Full regression solve: value iteration plus the forward evaluation of the
/// extracted rule on fresh paths (reported value).
pub fn solve(
    problem: &ProblemSpec,
    grid: &DyadicGrid,
    opts: &RegressionOptions,
) -> Result<RegressionSolution> {
    let values = value_iteration(problem, grid, opts)?;
    let forward = evaluate_policy(
        problem,
        grid,
        &values,
        opts.eval_paths,
        opts.seed ^ 0x5eed_f0f0_5eed_f0f0,
    )?;
    Ok(RegressionSolution { values, forward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::MarkSet;
    use crate::path::constant_pre_history;
    use crate::reward::{CostPiece, RewardSpec};
    use crate::sfde::{Coefficients, GrowthParams};
    use std::sync::Arc;

    fn base_problem(sigma: f64) -> ProblemSpec {
        ProblemSpec {
            name: "reg-test".into(),
            coefficients: Coefficients {
                drift: Arc::new(|_, _| 0.0),
                diffusion: Arc::new(move |_, _| sigma),
                jump: None,
                impulse: Arc::new(|_, _, b: &Mark| b.as_scalar()),
            },
            rewards: RewardSpec {
                running: Arc::new(|_, _| 0.0),
                pieces: vec![CostPiece {
                    domain: MarkSet::interval(-5.0, 5.0, 0),
                    rate: Arc::new(|_, _, _| 0.5),
                }],
                terminal: None,
                discount: Arc::new(|_| 0.0),
                epsilon: 0.0,
                floor: 0.5,
            },
            growth: GrowthParams {
                q: 2,
                m: 0,
                lipschitz: 1.0,
                impulse_bound: 5.0,
            },
            marks: MarkSet::finite_scalars(&[0.0, 1.0]),
            horizon: HorizonMode::Infinite,
            information: Information::Full,
            x0: 0.0,
            pre_history: constant_pre_history(0.0),
        }
    }

    fn quick_opts(n_paths: usize) -> RegressionOptions {
        RegressionOptions {
            n_paths,
            seed: 11,
            k_max: 2,
            tol: None,
            features: FeatureSpec::default(),
            degree: 2,
            ridge: 1e-8,
            date_stride: 2,
            eval_paths: 200,
            initial_dispersion: 0.0,
        }
    }

    #[test]
    fn zero_reward_never_intervenes() {
        let problem = base_problem(0.1);
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let solution = solve(&problem, &grid, &quick_opts(400)).unwrap();
        assert!(solution.forward.mean.abs() < 1e-9);
        assert_eq!(solution.forward.histogram[0], solution.forward.n_paths);
        assert_eq!(solution.values.converged_at, Some(1));
    }

    #[test]
    fn deterministic_flow_reproduces_the_integral() {
        // phi == 1, no noise, costs prohibitive: value = int_0^1 e^{-t} dt
        let mut problem = base_problem(0.0);
        problem.rewards.running = Arc::new(|_, _| 1.0);
        problem.rewards.discount = Arc::new(|t| t);
        let grid = DyadicGrid::new(4, 1.0).unwrap();
        let mut opts = quick_opts(400);
        opts.date_stride = 4;
        let solution = solve(&problem, &grid, &opts).unwrap();
        // left rule of e^{-t} on the level-4 grid
        let step = grid.step();
        let expect: f64 = (0..grid.n_steps()).map(|i| (-(i as f64) * step).exp() * step).sum();
        assert!(
            (solution.forward.mean - expect).abs() < 1e-12,
            "got {} want {expect}",
            solution.forward.mean
        );
        // identical samples; only cancellation noise remains
        assert!(solution.forward.stderr < 1e-12);
    }

    #[test]
    fn profitable_reset_is_found_with_dispersion() {
        // running reward -(x - 1)^2: pushing the state from 0 to 1 at cost
        // 0.05 clearly pays; training needs dispersed initial states to
        // identify the root surface at post-impulse states
        let mut problem = base_problem(0.2);
        problem.rewards.running = Arc::new(|_, x: f64| -(x - 1.0) * (x - 1.0));
        problem.rewards.pieces = vec![CostPiece {
            domain: MarkSet::interval(-5.0, 5.0, 0),
            rate: Arc::new(|_, _, _| 0.05),
        }];
        problem.rewards.floor = 0.05;
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let mut opts = quick_opts(2000);
        opts.date_stride = 1;
        opts.initial_dispersion = 1.2;
        opts.eval_paths = 2000;
        let solution = solve(&problem, &grid, &opts).unwrap();
        assert!(
            solution.forward.histogram[0] < solution.forward.n_paths,
            "the rule should intervene somewhere"
        );
        // doing nothing is worth about int -(0.2^2 t) dt ~ -0.02; the reset
        // rule must beat it clearly after paying its cost
        assert!(
            solution.forward.mean > -0.07,
            "forward value {}",
            solution.forward.mean
        );
        for (k, w) in solution.values.min_increments.iter().enumerate() {
            assert!(
                *w > -0.05,
                "stage {} decreased by {w}",
                k + 1
            );
        }
    }

    #[test]
    fn trivial_information_is_rejected() {
        let mut problem = base_problem(0.1);
        problem.information = Information::Trivial;
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        assert!(value_iteration(&problem, &grid, &quick_opts(400)).is_err());
    }

    #[test]
    fn path_budget_precondition() {
        let problem = base_problem(0.1);
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let mut opts = quick_opts(20);
        opts.degree = 3;
        assert!(value_iteration(&problem, &grid, &opts).is_err());
    }
}
