//! Simulation of impulsively controlled stochastic functional differential
//! equations driven by a Brownian motion and a finite-activity (compound
//! Poisson) jump part.
//!
//! Between interventions the state follows the Euler scheme
//!
//! ```text
//! X_{i+1} = X_i + a(t_i, X_{. <= t_i}) dt + sigma(t_i, X_{. <= t_i}) dW_i
//!           + sum_{jumps in (t_i, t_{i+1}]} gamma(t_i, X_{. < t_i}, z)
//!           - lambda E_Z[gamma(t_i, ., Z)] dt
//! ```
//!
//! with the compensator estimated on a fixed quadrature sample of the jump
//! law drawn once at setup.  At an intervention node the state resets to
//! `Gamma(t, X_{. <= t}, b)`, which must respect the growth bound
//! `|Gamma| <= K_Gamma v |X_t|`; simultaneous impulses compose sequentially.
//!
//! All randomness comes from `ChaCha12` seeded explicitly, one stream per
//! path, so identical `(problem, control, grid, seed)` reproduce paths
//! bit-for-bit regardless of batch size.  Noise can be drawn on a finer
//! dyadic level than the simulation grid, supporting common-random-number
//! comparisons across grid levels.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::control::{DyadicGrid, ImpulseControl, Mark, MarkSet};
use crate::error::{Error, Result};
use crate::path::{CadlagPath, PreHistory};
use crate::reward::RewardSpec;
use crate::snell::Information;

/// Relative tolerance for the impulse growth-bound check.
const GROWTH_TOL: f64 = 1e-9;

/// Read-only view of the path built so far; coefficients receive this, so by
/// construction they cannot look ahead of the current time.
pub struct PathView<'a> {
    step: f64,
    /// Right values at nodes `0..=upto`.
    right: &'a [f64],
    upto: usize,
    pre_history: &'a PreHistory,
}

impl<'a> PathView<'a> {
    /// Time of the newest visible node.
    pub fn t(&self) -> f64 {
        self.upto as f64 * self.step
    }

    /// State at the newest visible node.
    pub fn current(&self) -> f64 {
        self.right[self.upto]
    }

    /// Path value at `s <= t()`; negative times read the pre-history and
    /// times between nodes take the left node's value.
    pub fn value(&self, s: f64) -> f64 {
        if s < 0.0 {
            return (self.pre_history)(s);
        }
        let raw = s / self.step;
        let nearest = raw.round();
        let idx = if (raw - nearest).abs() <= 1e-9 {
            nearest as usize
        } else {
            raw.floor() as usize
        };
        self.right[idx.min(self.upto)]
    }

    /// Max of |X| over nodes in `[from v 0, t()]`.
    pub fn sup_abs(&self, from: f64) -> f64 {
        let lo = ((from.max(0.0) / self.step).ceil()) as usize;
        self.right[lo.min(self.upto)..=self.upto]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Left-rule integral of the path over `[from v 0, t()]`.
    pub fn integral(&self, from: f64) -> f64 {
        let lo = ((from.max(0.0) / self.step).ceil()) as usize;
        self.right[lo.min(self.upto)..self.upto]
            .iter()
            .map(|v| v * self.step)
            .sum()
    }

    /// View over an explicit right-value prefix (regression backends probe
    /// impulse maps at hypothetical states this way).
    pub(crate) fn from_parts(
        step: f64,
        right: &'a [f64],
        pre_history: &'a PreHistory,
    ) -> Self {
        PathView {
            step,
            upto: right.len() - 1,
            right,
            pre_history,
        }
    }
}

impl crate::path::PathRead for PathView<'_> {
    fn grid_step(&self) -> f64 {
        self.step
    }
    fn last_node(&self) -> usize {
        self.upto
    }
    fn node_value(&self, i: usize) -> f64 {
        self.right[i]
    }
    fn pre_zero(&self, t: f64) -> f64 {
        (self.pre_history)(t)
    }
}

pub type StateFn = Arc<dyn Fn(f64, &PathView<'_>) -> f64 + Send + Sync>;
pub type JumpCoeffFn = Arc<dyn Fn(f64, &PathView<'_>, f64) -> f64 + Send + Sync>;
pub type ImpulseMapFn = Arc<dyn Fn(f64, &PathView<'_>, &Mark) -> f64 + Send + Sync>;
pub type JumpSampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;
pub type DominatingFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Finite-activity jump part: rate, size law, jump coefficient and the
/// dominating function of the size argument.
#[derive(Clone)]
pub struct JumpPart {
    pub rate: f64,
    pub size: JumpSampler,
    pub coeff: JumpCoeffFn,
    pub dominating: DominatingFn,
    /// Fixed quadrature sample of the size law used for the compensator.
    compensator_nodes: Vec<f64>,
}

impl JumpPart {
    /// Draws the compensator quadrature sample once, from its own seed.
    pub fn new(
        rate: f64,
        size: JumpSampler,
        coeff: JumpCoeffFn,
        dominating: DominatingFn,
        quadrature_seed: u64,
        n_quadrature: usize,
    ) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidInput(format!("jump rate {rate} must be >= 0")));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(quadrature_seed);
        let nodes = (0..n_quadrature.max(1)).map(|_| size(&mut rng)).collect();
        Ok(JumpPart {
            rate,
            size,
            coeff,
            dominating,
            compensator_nodes: nodes,
        })
    }

    /// `lambda E_Z[gamma(t, path, Z)]` on the frozen quadrature sample.
    fn compensator(&self, t: f64, view: &PathView<'_>) -> f64 {
        let mean = self
            .compensator_nodes
            .iter()
            .map(|&z| (self.coeff)(t, view, z))
            .sum::<f64>()
            / self.compensator_nodes.len() as f64;
        self.rate * mean
    }
}

/// SFDE coefficients: drift, diffusion, jumps and the impulse map.
#[derive(Clone)]
pub struct Coefficients {
    pub drift: StateFn,
    pub diffusion: StateFn,
    pub jump: Option<JumpPart>,
    pub impulse: ImpulseMapFn,
}

/// Growth and regularity parameters of the coefficient contract.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GrowthParams {
    /// Polynomial growth order; at least 2.
    pub q: u32,
    /// Moment exponent of the flow-continuity estimate (`2(m+2)` moments).
    pub m: u32,
    /// Lipschitz constant of the coefficients.
    pub lipschitz: f64,
    /// Impulse growth bound `K_Gamma`.
    pub impulse_bound: f64,
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidInput(format!(
                "polynomial growth order q = {} must be >= 2",
                self.q
            )));
        }
        if !(self.impulse_bound > 0.0) {
            return Err(Error::InvalidInput("impulse bound must be positive".into()));
        }
        Ok(())
    }

    /// Moment power `2(m + 2)` used by the flow-continuity estimate.
    pub fn flow_moment_power(&self) -> i32 {
        2 * (self.m as i32 + 2)
    }
}

/// Horizon mode of a continuous problem.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum HorizonMode {
    Infinite,
    /// Random horizon with finite support on times (must be grid nodes of
    /// whatever grid the problem is solved on).
    Random { support: Vec<(f64, f64)> },
}

/// A complete impulse-control problem for the simulation backends.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub coefficients: Coefficients,
    pub rewards: RewardSpec,
    pub growth: GrowthParams,
    pub marks: MarkSet,
    pub horizon: HorizonMode,
    pub information: Information,
    pub x0: f64,
    pub pre_history: PreHistory,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.growth.validate()?;
        self.marks.validate()?;
        self.rewards.validate()?;
        if !self.x0.is_finite() {
            return Err(Error::InvalidInput("initial state must be finite".into()));
        }
        if let HorizonMode::Random { support } = &self.horizon {
            if support.is_empty() {
                return Err(Error::InvalidInput("random horizon needs support".into()));
            }
            let total: f64 = support.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "horizon probabilities sum to {total}"
                )));
            }
        }
        Ok(())
    }
}

/// One path's worth of driving noise, drawn on a dyadic level at least as
/// fine as the simulation grid so the same realization can drive several
/// grid levels (common random numbers).
#[derive(Debug, Clone)]
pub struct NoiseRealization {
    pub level: u32,
    pub n_fine_steps: usize,
    /// Brownian increments per fine step.
    pub dw: Vec<f64>,
    /// Jump times and sizes, sorted by time.
    pub jumps: Vec<(f64, f64)>,
}

impl NoiseRealization {
    /// Draws noise for path `stream` of the run seeded by `seed`.
    pub fn draw(
        problem: &ProblemSpec,
        seed: u64,
        stream: u64,
        level: u32,
        n_fine_steps: usize,
    ) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let t_end = n_fine_steps as f64 * 0.5f64.powi(level as i32);
        let mut jumps: Vec<(f64, f64)> = Vec::new();
        if let Some(jump) = &problem.coefficients.jump {
            if jump.rate > 0.0 {
                let n = Poisson::new(jump.rate * t_end)
                    .map(|p| p.sample(&mut rng) as usize)
                    .unwrap_or(0);
                for _ in 0..n {
                    let t: f64 = rng.random::<f64>() * t_end;
                    let z = (jump.size)(&mut rng);
                    jumps.push((t, z));
                }
                jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        let sqrt_dt = 0.5f64.powi(level as i32).sqrt();
        let dw = (0..n_fine_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sqrt_dt
            })
            .collect();
        NoiseRealization {
            level,
            n_fine_steps,
            dw,
            jumps,
        }
    }

    pub fn for_grid(problem: &ProblemSpec, seed: u64, stream: u64, grid: &DyadicGrid) -> Self {
        Self::draw(problem, seed, stream, grid.level(), grid.n_steps())
    }

    /// Brownian increment over grid step `i` of a (coarser) grid.
    fn dw_for_step(&self, grid: &DyadicGrid, i: usize) -> f64 {
        let ratio = 1usize << (self.level - grid.level());
        self.dw[i * ratio..(i + 1) * ratio].iter().sum()
    }
}

/// Incremental simulator: the forward policy evaluators decide impulses node
/// by node while the path is being built.
pub struct Stepper<'a> {
    problem: &'a ProblemSpec,
    grid: &'a DyadicGrid,
    noise: &'a NoiseRealization,
    node: usize,
    left: Vec<f64>,
    right: Vec<f64>,
    jump_flag: Vec<bool>,
    next_jump: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        problem: &'a ProblemSpec,
        grid: &'a DyadicGrid,
        noise: &'a NoiseRealization,
    ) -> Result<Self> {
        Self::with_initial(problem, grid, noise, problem.x0)
    }

    /// Starts the path from an explicit initial state (training devices like
    /// initial-state dispersion use this; the pre-history is unchanged).
    pub fn with_initial(
        problem: &'a ProblemSpec,
        grid: &'a DyadicGrid,
        noise: &'a NoiseRealization,
        x0: f64,
    ) -> Result<Self> {
        if noise.level < grid.level() {
            return Err(Error::InvalidInput(
                "noise level is coarser than the simulation grid".into(),
            ));
        }
        let ratio = 1usize << (noise.level - grid.level());
        if noise.n_fine_steps < grid.n_steps() * ratio {
            return Err(Error::InvalidInput(
                "noise realization too short for the grid".into(),
            ));
        }
        let n = grid.n_nodes();
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        left[0] = x0;
        right[0] = x0;
        Ok(Stepper {
            problem,
            grid,
            noise,
            node: 0,
            left,
            right,
            jump_flag: vec![false; n],
            next_jump: 0,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn t(&self) -> f64 {
        self.grid.time(self.node)
    }

    pub fn current(&self) -> f64 {
        self.right[self.node]
    }

    pub fn view(&self) -> PathView<'_> {
        PathView {
            step: self.grid.step(),
            right: &self.right[..=self.node],
            upto: self.node,
            pre_history: &self.problem.pre_history,
        }
    }

    /// Applies one impulse at the current node, enforcing the growth bound.
    pub fn apply_impulse_now(&mut self, b: &Mark) -> Result<f64> {
        let t = self.t();
        let new_state = {
            let view = self.view();
            let bound = self.problem.growth.impulse_bound.max(view.current().abs());
            let y = (self.problem.coefficients.impulse)(t, &view, b);
            if !y.is_finite() || y.abs() > bound * (1.0 + GROWTH_TOL) + GROWTH_TOL {
                return Err(Error::GrowthBound {
                    t,
                    value: y.abs(),
                    bound,
                });
            }
            y
        };
        self.right[self.node] = new_state;
        self.jump_flag[self.node] = true;
        Ok(new_state)
    }

    /// Advances one grid step (drift + diffusion + compensated jumps).
    pub fn step(&mut self) -> Result<()> {
        let i = self.node;
        debug_assert!(i < self.grid.n_steps());
        let t = self.grid.time(i);
        let dt = self.grid.step();
        let t_next = self.grid.time(i + 1);
        // jumps landing in (t_i, t_{i+1}]
        let jump_from = self.next_jump;
        let mut jump_to = jump_from;
        while jump_to < self.noise.jumps.len() && self.noise.jumps[jump_to].0 <= t_next {
            jump_to += 1;
        }
        self.next_jump = jump_to;
        let (mut continuous, jump_sum, jumped) = {
            let view = self.view();
            let a = (self.problem.coefficients.drift)(t, &view);
            let s = (self.problem.coefficients.diffusion)(t, &view);
            let mut x = view.current() + a * dt + s * self.noise.dw_for_step(self.grid, i);
            let mut jump_sum = 0.0;
            let mut jumped = false;
            if let Some(jump) = &self.problem.coefficients.jump {
                x -= jump.compensator(t, &view) * dt;
                for &(_, z) in &self.noise.jumps[jump_from..jump_to] {
                    jump_sum += (jump.coeff)(t, &view, z);
                    jumped = true;
                }
            }
            (x, jump_sum, jumped)
        };
        if !continuous.is_finite() || !(continuous + jump_sum).is_finite() {
            return Err(Error::SimulationDiverged { step: i + 1, t: t_next });
        }
        if !jumped {
            // avoid -0.0 vs 0.0 mismatches between sides
            self.left[i + 1] = continuous;
            self.right[i + 1] = continuous;
        } else {
            self.left[i + 1] = continuous;
            continuous += jump_sum;
            self.right[i + 1] = continuous;
            self.jump_flag[i + 1] = true;
        }
        self.node = i + 1;
        Ok(())
    }

    pub fn finish(self) -> Result<CadlagPath> {
        debug_assert_eq!(self.node, self.grid.n_steps());
        CadlagPath::new(
            self.grid.clone(),
            self.left,
            self.right,
            self.jump_flag,
            self.problem.pre_history.clone(),
        )
    }
}

/// Interventions grouped per grid node, in list order.
fn impulses_by_node(
    u: &ImpulseControl,
    grid: &DyadicGrid,
) -> Result<Vec<(usize, Vec<Mark>)>> {
    let mut grouped: Vec<(usize, Vec<Mark>)> = Vec::new();
    for iv in u.interventions() {
        let node = grid.node_index(iv.t)?;
        match grouped.last_mut() {
            Some((n, marks)) if *n == node => marks.push(iv.b.clone()),
            _ => grouped.push((node, vec![iv.b.clone()])),
        }
    }
    Ok(grouped)
}

/// Simulates the controlled SFDE under a given noise realization.
pub fn simulate_with_noise(
    problem: &ProblemSpec,
    u: &ImpulseControl,
    grid: &DyadicGrid,
    noise: &NoiseRealization,
) -> Result<CadlagPath> {
    problem.validate()?;
    u.validate(&problem.marks)?;
    let grouped = impulses_by_node(u, grid)?;
    let mut stepper = Stepper::new(problem, grid, noise)?;
    let mut g = grouped.iter().peekable();
    for node in 0..grid.n_nodes() {
        while let Some((n, marks)) = g.peek() {
            if *n != node {
                break;
            }
            for b in marks {
                stepper.apply_impulse_now(b)?;
            }
            g.next();
        }
        if node < grid.n_steps() {
            stepper.step()?;
        }
    }
    stepper.finish()
}

/// Simulates one path from an explicit seed (stream 0).
pub fn simulate(
    problem: &ProblemSpec,
    u: &ImpulseControl,
    grid: &DyadicGrid,
    seed: u64,
) -> Result<CadlagPath> {
    let noise = NoiseRealization::for_grid(problem, seed, 0, grid);
    simulate_with_noise(problem, u, grid, &noise)
}

/// Paths under every truncation `[u]_0, .., [u]_N` of one control, driven by
/// one shared noise realization, plus (in random-horizon mode) a sampled
/// horizon.  This is the input shape the reward functionals consume.
pub struct PathBundle {
    pub control: ImpulseControl,
    /// `paths[j]` is the trajectory under the first `j` interventions.
    pub paths: Vec<CadlagPath>,
    pub eta: Option<f64>,
}

impl PathBundle {
    pub fn controlled(&self) -> &CadlagPath {
        self.paths.last().expect("bundle has at least [u]_0")
    }
}

/// Simulates the truncation bundle of `u` with common noise; in
/// random-horizon mode the horizon is sampled from the same stream.
pub fn simulate_bundle(
    problem: &ProblemSpec,
    u: &ImpulseControl,
    grid: &DyadicGrid,
    seed: u64,
    stream: u64,
) -> Result<PathBundle> {
    let noise = NoiseRealization::for_grid(problem, seed, stream, grid);
    let mut paths = Vec::with_capacity(u.len() + 1);
    for j in 0..=u.len() {
        paths.push(simulate_with_noise(problem, &u.truncate(j), grid, &noise)?);
    }
    let eta = match &problem.horizon {
        HorizonMode::Infinite => None,
        HorizonMode::Random { support } => {
            // the horizon draw uses its own derived seed so it does not
            // perturb the path noise of the stream
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(stream);
            let draw: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = support[support.len() - 1].0;
            for &(t, p) in support {
                acc += p;
                if draw < acc {
                    chosen = t;
                    break;
                }
            }
            Some(chosen)
        }
    };
    Ok(PathBundle {
        control: u.clone(),
        paths,
        eta,
    })
}

/// Applies the impulse map at time `t` on a completed path, enforcing the
/// growth bound `|Gamma| <= K_Gamma v |X_t|`.
pub fn apply_impulse(problem: &ProblemSpec, t: f64, path: &CadlagPath, b: &Mark) -> Result<f64> {
    let node = path.grid().node_index(t)?;
    let right: Vec<f64> = (0..=node).map(|i| path.right_at_node(i)).collect();
    let view = PathView {
        step: path.grid().step(),
        right: &right,
        upto: node,
        pre_history: path.pre_history(),
    };
    let bound = problem.growth.impulse_bound.max(view.current().abs());
    let y = (problem.coefficients.impulse)(t, &view, b);
    if !y.is_finite() || y.abs() > bound * (1.0 + GROWTH_TOL) + GROWTH_TOL {
        return Err(Error::GrowthBound {
            t,
            value: y.abs(),
            bound,
        });
    }
    Ok(y)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn mean_stderr(samples: &[f64]) -> Estimate {
    let n = samples.len().max(1) as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

/// Estimate of `E[sup_{[0,T]} |X^u|^p]`, maximized over a list of controls
/// (a desk-scale surrogate for the supremum over all finite controls).
#[derive(Debug, Clone, serde::Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Index of the maximizing control in the supplied list.
    pub argmax: usize,
    pub per_control: Vec<Estimate>,
}

pub fn moment_estimate(
    problem: &ProblemSpec,
    controls: &[ImpulseControl],
    grid: &DyadicGrid,
    t_max: f64,
    p: u32,
    n_paths: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if p % 2 != 0 || p == 0 {
        return Err(Error::InvalidInput("moment order p must be a positive even integer".into()));
    }
    if p > 2 * problem.growth.q {
        return Err(Error::InvalidInput(format!(
            "moment order {p} exceeds the guaranteed 2q = {}",
            2 * problem.growth.q
        )));
    }
    if controls.is_empty() {
        return Err(Error::InvalidInput("need at least one control".into()));
    }
    let mut per_control = Vec::with_capacity(controls.len());
    for u in controls {
        let mut samples = Vec::with_capacity(n_paths);
        for path_idx in 0..n_paths {
            let noise = NoiseRealization::for_grid(problem, seed, path_idx as u64, grid);
            let path = simulate_with_noise(problem, u, grid, &noise)?;
            samples.push(path.sup_norm(0.0, t_max)?.powi(p as i32));
        }
        per_control.push(mean_stderr(&samples));
    }
    let argmax = per_control
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(i, _)| i)
        .unwrap();
    Ok(MomentEstimate {
        value: per_control[argmax].value,
        stderr: per_control[argmax].stderr,
        argmax,
        per_control,
    })
}

/// One row of the flow-continuity table.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FlowRow {
    pub dt: f64,
    pub db: f64,
    /// `E[sup_{[t + dt, T]} |delta X|^{2(m+2)}]` under common random numbers.
    pub moment: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FlowContinuity {
    pub rows: Vec<FlowRow>,
    /// Log-log slope of the moment against `dt + db`, fitted over rows with
    /// a positive perturbation and a positive moment.
    pub slope: Option<f64>,
    pub moment_power: i32,
}

/// Measures the continuity of the control-to-path flow: pairs of simulations
/// with identical noise under `v o (t, b) o u` and `v o (t + dt, b + db) o u`,
/// reporting the `2(m+2)`-moment of the sup distance past the perturbed
/// intervention and the fitted log-log slope.
#[allow(clippy::too_many_arguments)]
pub fn flow_perturbation_test(
    problem: &ProblemSpec,
    v: &ImpulseControl,
    u: &ImpulseControl,
    t: f64,
    b: f64,
    deltas: &[(f64, f64)],
    grid: &DyadicGrid,
    n_paths: usize,
    seed: u64,
) -> Result<FlowContinuity> {
    let power = problem.growth.flow_moment_power();
    let t_end = grid.time(grid.n_steps());
    let mut rows = Vec::with_capacity(deltas.len());
    for &(dt, db) in deltas {
        if dt < 0.0 || !(t + dt <= t_end) {
            return Err(Error::InvalidInput(format!(
                "perturbed time {} leaves the grid",
                t + dt
            )));
        }
        let base = v
            .compose(&ImpulseControl::single(grid.snap(t), Mark::scalar(b)))
            .compose(u);
        let pert = v
            .compose(&ImpulseControl::single(grid.snap(t + dt), Mark::scalar(b + db)))
            .compose(u);
        let from = grid.snap(t + dt);
        let mut samples = Vec::with_capacity(n_paths);
        for path_idx in 0..n_paths {
            let noise = NoiseRealization::for_grid(problem, seed, path_idx as u64, grid);
            let p1 = simulate_with_noise(problem, &base, grid, &noise)?;
            let p2 = simulate_with_noise(problem, &pert, grid, &noise)?;
            let lo = grid.node_index(from)?;
            let mut sup = 0.0f64;
            for i in lo..grid.n_nodes() {
                // at the window's left edge only the cadlag (right) value
                // lies inside [t + dt, T]; the left limit there belongs to
                // earlier times
                if i > lo {
                    sup = sup.max((p1.left_at_node(i) - p2.left_at_node(i)).abs());
                }
                sup = sup.max((p1.right_at_node(i) - p2.right_at_node(i)).abs());
            }
            samples.push(sup.powi(power));
        }
        let est = mean_stderr(&samples);
        rows.push(FlowRow {
            dt,
            db,
            moment: est.value,
            stderr: est.stderr,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.dt + r.db > 0.0 && r.moment > 0.0)
        .map(|r| ((r.dt + r.db).ln(), r.moment.ln()))
        .collect();
    let slope = fit_slope(&pts);
    Ok(FlowContinuity {
        rows,
        slope,
        moment_power: power,
    })
}

/// Least-squares slope of `y` against `x`; `None` with fewer than two points.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::constant_pre_history;
    use crate::reward::{CostPiece, RewardSpec};

    fn const_fn(c: f64) -> StateFn {
        Arc::new(move |_, _| c)
    }

    /// Problem with configurable constant coefficients and reset impulse.
    pub(crate) fn simple_problem(a: f64, sigma: f64, x0: f64) -> ProblemSpec {
        ProblemSpec {
            name: "simple".into(),
            coefficients: Coefficients {
                drift: const_fn(a),
                diffusion: const_fn(sigma),
                jump: None,
                impulse: Arc::new(|_, _, b: &Mark| b.as_scalar()),
            },
            rewards: RewardSpec {
                running: Arc::new(|_, _| 0.0),
                pieces: vec![CostPiece {
                    domain: MarkSet::interval(-10.0, 10.0, 0),
                    rate: Arc::new(|_, _, _| 1.0),
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
                impulse_bound: 10.0,
            },
            marks: MarkSet::interval(-10.0, 10.0, 0),
            horizon: HorizonMode::Infinite,
            information: Information::Full,
            x0,
            pre_history: constant_pre_history(x0),
        }
    }

    #[test]
    fn zero_dynamics_constant_path() {
        let problem = simple_problem(0.0, 0.0, 1.0);
        let grid = DyadicGrid::new(3, 1.0).unwrap();
        let path = simulate(&problem, &ImpulseControl::empty(), &grid, 7).unwrap();
        for i in 0..grid.n_nodes() {
            assert_eq!(path.right_at_node(i), 1.0);
        }
    }

    #[test]
    fn pure_reset_dynamics() {
        // a = sigma = 0, Gamma = b, impulse (0.5; 2): path is 1 then 2
        let problem = simple_problem(0.0, 0.0, 1.0);
        let grid = DyadicGrid::new(3, 1.0).unwrap();
        let u = ImpulseControl::from_pairs(&[(0.5, 2.0)]).unwrap();
        let path = simulate(&problem, &u, &grid, 7).unwrap();
        for i in 0..grid.n_nodes() {
            let t = grid.time(i);
            let expect = if t < 0.5 { 1.0 } else { 2.0 };
            assert_eq!(path.right_at_node(i), expect, "t = {t}");
        }
        // left limit at the impulse node keeps the pre-impulse value
        let node = grid.node_index(0.5).unwrap();
        assert_eq!(path.left_at_node(node), 1.0);
        assert!(path.has_jump_at_node(node));
    }

    #[test]
    fn constant_drift_is_exact() {
        let problem = simple_problem(1.0, 0.0, 0.0);
        let grid = DyadicGrid::new(4, 1.0).unwrap();
        let path = simulate(&problem, &ImpulseControl::empty(), &grid, 3).unwrap();
        assert!((path.right_at_node(grid.n_steps()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delayed_drift_reads_pre_history() {
        // a(t, y) = -y(t - 1/4), pre-history 1: X_t = 1 - t until t = 1/4
        let mut problem = simple_problem(0.0, 0.0, 1.0);
        problem.coefficients.drift = Arc::new(|t: f64, view: &PathView<'_>| -view.value(t - 0.25));
        let grid = DyadicGrid::new(4, 0.25).unwrap();
        let path = simulate(&problem, &ImpulseControl::empty(), &grid, 11).unwrap();
        for i in 0..=grid.n_steps() {
            let t = grid.time(i);
            assert!((path.right_at_node(i) - (1.0 - t)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn impulse_growth_bound_enforced() {
        let mut problem = simple_problem(0.0, 0.0, 1.0);
        problem.growth.impulse_bound = 2.0;
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let path = simulate(&problem, &ImpulseControl::empty(), &grid, 1).unwrap();

        // |b| <= K: returns b
        assert_eq!(
            apply_impulse(&problem, 0.5, &path, &Mark::scalar(1.5)).unwrap(),
            1.5
        );
        // identity impulse returns the current state
        problem.coefficients.impulse = Arc::new(|t, v: &PathView<'_>, _b: &Mark| v.value(t));
        assert_eq!(
            apply_impulse(&problem, 0.5, &path, &Mark::scalar(0.0)).unwrap(),
            1.0
        );
        // a map exceeding K v |y_t| violates the coefficient contract
        problem.coefficients.impulse =
            Arc::new(|t, v: &PathView<'_>, _b: &Mark| 2.0 + v.value(t).abs() + 1.0);
        let err = apply_impulse(&problem, 0.5, &path, &Mark::scalar(0.0)).unwrap_err();
        assert!(matches!(err, Error::GrowthBound { .. }), "{err}");
    }

    #[test]
    fn determinism_bit_for_bit() {
        let mut problem = simple_problem(0.1, 0.3, 1.0);
        problem.coefficients.jump = Some(
            JumpPart::new(
                2.0,
                Arc::new(|rng: &mut dyn RngCore| {
                    let z: f64 = StandardNormal.sample(rng);
                    0.1 * z
                }),
                Arc::new(|_, _, z| z),
                Arc::new(|z: f64| z.abs()),
                99,
                64,
            )
            .unwrap(),
        );
        let grid = DyadicGrid::new(5, 1.0).unwrap();
        let u = ImpulseControl::from_pairs(&[(0.25, 0.5)]).unwrap();
        let p1 = simulate(&problem, &u, &grid, 42).unwrap();
        let p2 = simulate(&problem, &u, &grid, 42).unwrap();
        for i in 0..grid.n_nodes() {
            assert_eq!(p1.right_at_node(i).to_bits(), p2.right_at_node(i).to_bits());
            assert_eq!(p1.left_at_node(i).to_bits(), p2.left_at_node(i).to_bits());
        }
        let p3 = simulate(&problem, &u, &grid, 43).unwrap();
        assert!((0..grid.n_nodes()).any(|i| p1.right_at_node(i) != p3.right_at_node(i)));
    }

    #[test]
    fn control_locality_before_divergence_time() {
        let problem = simple_problem(0.05, 0.2, 1.0);
        let grid = DyadicGrid::new(5, 1.0).unwrap();
        let u1 = ImpulseControl::from_pairs(&[(0.5, 2.0)]).unwrap();
        let u2 = ImpulseControl::from_pairs(&[(0.5, 3.0), (0.75, 1.0)]).unwrap();
        let noise = NoiseRealization::for_grid(&problem, 5, 0, &grid);
        let p1 = simulate_with_noise(&problem, &u1, &grid, &noise).unwrap();
        let p2 = simulate_with_noise(&problem, &u2, &grid, &noise).unwrap();
        let split = grid.node_index(0.5).unwrap();
        for i in 0..split {
            assert_eq!(p1.right_at_node(i).to_bits(), p2.right_at_node(i).to_bits());
        }
    }

    #[test]
    fn moment_estimate_trivial_cases() {
        // zero dynamics from zero: 0 +- 0
        let problem = simple_problem(0.0, 0.0, 0.0);
        let grid = DyadicGrid::new(3, 1.0).unwrap();
        let est = moment_estimate(&problem, &[ImpulseControl::empty()], &grid, 1.0, 2, 16, 1).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);

        // deterministic ramp: sup |X|^2 = 1 +- 0
        let problem = simple_problem(1.0, 0.0, 0.0);
        let est = moment_estimate(&problem, &[ImpulseControl::empty()], &grid, 1.0, 2, 16, 1).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn moment_order_capped_by_growth() {
        let problem = simple_problem(0.0, 0.0, 0.0);
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        assert!(moment_estimate(&problem, &[ImpulseControl::empty()], &grid, 1.0, 6, 4, 1).is_err());
    }

    #[test]
    fn flow_test_zero_delta_and_pure_reset() {
        let problem = simple_problem(0.0, 0.0, 1.0);
        let grid = DyadicGrid::new(6, 1.0).unwrap();
        let deltas = [(0.0, 0.0), (0.0, 0.25), (0.0, 0.125), (0.0, 0.0625)];
        let fc = flow_perturbation_test(
            &problem,
            &ImpulseControl::empty(),
            &ImpulseControl::empty(),
            0.25,
            1.0,
            &deltas,
            &grid,
            8,
            3,
        )
        .unwrap();
        assert_eq!(fc.rows[0].moment, 0.0, "zero perturbation gives distance 0");
        // pure reset dynamics: sup |delta X| = db exactly, so the moment is
        // db^4 and the fitted log-log slope is 2(m+2) = 4
        for row in &fc.rows[1..] {
            assert!((row.moment - row.db.powi(4)).abs() < 1e-15);
        }
        let slope = fc.slope.unwrap();
        assert!((slope - 4.0).abs() < 1e-9, "slope {slope}");
    }

    #[test]
    fn compensated_jumps_keep_mean_level() {
        // a = sigma = 0, additive jumps with nonzero mean: the compensator
        // must keep E[X_T] at x0 (within Monte-Carlo error)
        let mut problem = simple_problem(0.0, 0.0, 1.0);
        problem.coefficients.jump = Some(
            JumpPart::new(
                3.0,
                Arc::new(|rng: &mut dyn RngCore| 0.2 + 0.05 * rand::Rng::random::<f64>(rng)),
                Arc::new(|_, _, z| z),
                Arc::new(|z: f64| z.abs()),
                123,
                4096,
            )
            .unwrap(),
        );
        let grid = DyadicGrid::new(5, 1.0).unwrap();
        let n = 4000;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let noise = NoiseRealization::for_grid(&problem, 17, i as u64, &grid);
            let path = simulate_with_noise(&problem, &ImpulseControl::empty(), &grid, &noise).unwrap();
            samples.push(path.right_at_node(grid.n_steps()));
        }
        let est = mean_stderr(&samples);
        assert!(
            (est.value - 1.0).abs() < 3.0 * est.stderr + 5e-3,
            "compensated mean {} +- {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn off_grid_intervention_rejected() {
        let problem = simple_problem(0.0, 0.0, 1.0);
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let u = ImpulseControl::from_pairs(&[(0.3, 1.0)]).unwrap();
        assert!(matches!(
            simulate(&problem, &u, &grid, 0).unwrap_err(),
            Error::OffGrid(_)
        ));
    }

    #[test]
    fn diverging_drift_reports_step() {
        let mut problem = simple_problem(0.0, 0.0, 1.0);
        problem.coefficients.drift = Arc::new(|_, v: &PathView<'_>| v.current() * v.current() * 1e3);
        let grid = DyadicGrid::new(2, 4.0).unwrap();
        let err = simulate(&problem, &ImpulseControl::empty(), &grid, 0).unwrap_err();
        assert!(matches!(err, Error::SimulationDiverged { .. }), "{err}");
    }
}
