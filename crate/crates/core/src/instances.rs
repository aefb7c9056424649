//! Built-in problem instances: the closed-form two-point-horizon example on
//! dyadic grids, a GBM-style impulse instance in matched lattice and
//! Monte-Carlo forms, a discounted tail-decay family, shipped finite
//! instances for the verification suites, and the SFDE problems the
//! diagnostics run on.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::control::{DyadicGrid, Mark, MarkSet};
use crate::error::Result;
use crate::oracle::{FiniteInstance, LatticeHorizon};
use crate::path::constant_pre_history;
use crate::reward::{CostPiece, RewardSpec};
use crate::sfde::{Coefficients, GrowthParams, HorizonMode, ProblemSpec};
use crate::snell::{Information, LatticeModel};

// ---------------------------------------------------------------------------
// The closed-form example on a dyadic grid
// ---------------------------------------------------------------------------

/// The two-point random-horizon instance on the level-`l` dyadic grid over
/// `[0, 2]`: trivial filtration, states {0, 1}, singleton mark, horizon 1 or
/// 2 with probability 1/2 each, terminal reward `x e^{|t-1|}`, cost
/// `e^{|t-1|}`, no running reward, no discounting.
///
/// Its exact optimum on the grid (level >= 2) intervenes once at the last
/// node before time 1 and is worth `(1 + e)/2 - e^{2^-l}`, strictly below
/// the unattained supremum `(e - 1)/2`.
pub fn example_instance(level: u32) -> FiniteInstance {
    let grid = DyadicGrid::new(level, 2.0).expect("valid grid");
    let n = grid.n_nodes();
    let times = grid.times();
    let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let lattice = LatticeModel::new(2, vec![identity; n - 1], Information::Trivial).unwrap();
    let cost_at = |t: f64| (t - 1.0f64).abs().exp();
    FiniteInstance {
        name: format!("example-l{level}"),
        lattice,
        x0: 0,
        mark_labels: vec![1.0],
        flow: vec![vec![0.0, 0.0]; n - 1],
        cost: times.iter().map(|&t| vec![vec![cost_at(t)]; 2]).collect(),
        impulse: vec![vec![vec![1], vec![1]]; n],
        discount: vec![1.0; n],
        k_max: 3,
        horizon: LatticeHorizon::Random {
            pmf: vec![
                (grid.node_index(1.0).unwrap(), 0.5),
                (grid.node_index(2.0).unwrap(), 0.5),
            ],
            psi: times
                .iter()
                .map(|&t| vec![0.0, cost_at(t)])
                .collect(),
        },
        cost_floor: 1.0,
        times,
    }
}

// ---------------------------------------------------------------------------
// GBM-style impulse instance (matched lattice / Monte-Carlo pair)
// ---------------------------------------------------------------------------

/// Parameters shared by both forms of the GBM instance.  The state is the
/// log-price `y`; with constant drift and volatility the Euler step on the
/// date grid is exact, so the Monte-Carlo problem and the lattice
/// discretize the same date-grid problem.
pub struct GbmSpec {
    pub mu: f64,
    pub sigma: f64,
    pub rho_rate: f64,
    pub horizon: f64,
    pub grid_level: u32,
    /// Reset targets in log space (must be multiples of the bin width).
    pub targets: Vec<f64>,
    pub fixed_cost: f64,
    pub prop_cost: f64,
    pub reward_scale: f64,
    /// Log level the running reward tracks.
    pub reward_center: f64,
    pub bin_width: f64,
    pub y_max: f64,
}

impl GbmSpec {
    /// Replenishment flavor: the log level decays, impulses reset it above
    /// the tracked level, so the intervention region is one-sided (which a
    /// low-degree polynomial basis resolves well).  Eight decision dates
    /// over a year; about half of all paths intervene at least once.
    pub fn standard() -> Self {
        GbmSpec {
            mu: -0.25,
            sigma: 0.2,
            rho_rate: 0.1,
            horizon: 1.0,
            grid_level: 3,
            targets: vec![0.15],
            fixed_cost: 0.05,
            prop_cost: 0.1,
            reward_scale: 2.5,
            reward_center: 0.05,
            bin_width: 0.15 / 24.0,
            y_max: 0.8,
        }
    }

    fn drift_y(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }

    /// Running reward, concave in the log-price around the tracked level.
    pub fn running(&self, y: f64) -> f64 {
        let d = y - self.reward_center;
        1.0 - self.reward_scale * d * d
    }

    pub fn cost(&self, y: f64, target: f64) -> f64 {
        self.fixed_cost + self.prop_cost * (y - target).abs()
    }
}

/// Fine lattice form of the GBM instance: log-price bins, exact Gaussian
/// one-date transition kernels, reset targets sitting exactly on bins.
pub fn gbm_lattice(spec: &GbmSpec) -> Result<FiniteInstance> {
    let grid = DyadicGrid::new(spec.grid_level, spec.horizon)?;
    let n = grid.n_nodes();
    let times = grid.times();
    let half = (spec.y_max / spec.bin_width).round() as i64;
    let n_states = (2 * half + 1) as usize;
    let y_of = |j: usize| (j as i64 - half) as f64 * spec.bin_width;

    let dt = grid.step();
    let sd = spec.sigma * dt.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut kernel = vec![vec![0.0f64; n_states]; n_states];
    for (x, row) in kernel.iter_mut().enumerate() {
        let mean = y_of(x) + spec.drift_y() * dt;
        let mut acc_prev = 0.0;
        for (j, cell) in row.iter_mut().enumerate() {
            // upper bin edge in standardized units; the last bin absorbs
            let hi = if j + 1 == n_states {
                1.0
            } else {
                normal.cdf((y_of(j) + 0.5 * spec.bin_width - mean) / sd)
            };
            *cell = hi - acc_prev;
            acc_prev = hi;
        }
        let sum: f64 = row.iter().sum();
        row[n_states - 1] += 1.0 - sum;
    }

    let target_state = |t: f64| -> usize {
        let j = (t / spec.bin_width).round() as i64 + half;
        j as usize
    };
    let marks: Vec<f64> = spec.targets.clone();
    let flow: Vec<Vec<f64>> = (0..n - 1)
        .map(|_| (0..n_states).map(|x| dt * spec.running(y_of(x))).collect())
        .collect();
    let cost: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            (0..n_states)
                .map(|x| marks.iter().map(|&b| spec.cost(y_of(x), b)).collect())
                .collect()
        })
        .collect();
    let impulse: Vec<Vec<Vec<usize>>> = (0..n)
        .map(|_| {
            (0..n_states)
                .map(|_| marks.iter().map(|&b| target_state(b)).collect())
                .collect()
        })
        .collect();

    let instance = FiniteInstance {
        name: "gbm-lattice".into(),
        lattice: LatticeModel::new(n_states, vec![kernel; n - 1], Information::Full)?,
        x0: half as usize,
        mark_labels: marks,
        flow,
        cost,
        impulse,
        discount: times.iter().map(|&t| (-spec.rho_rate * t).exp()).collect(),
        k_max: 4,
        horizon: LatticeHorizon::Infinite,
        cost_floor: spec.fixed_cost,
        times,
    };
    instance.validate()?;
    Ok(instance)
}

/// Monte-Carlo form of the same instance.
pub fn gbm_problem(spec: &GbmSpec) -> ProblemSpec {
    let drift = spec.drift_y();
    let sigma = spec.sigma;
    let rho = spec.rho_rate;
    let scale = spec.reward_scale;
    let center = spec.reward_center;
    let fixed = spec.fixed_cost;
    let prop = spec.prop_cost;
    let lo = -spec.y_max;
    let hi = spec.y_max;
    ProblemSpec {
        name: "gbm-mc".into(),
        coefficients: Coefficients {
            drift: Arc::new(move |_, _| drift),
            diffusion: Arc::new(move |_, _| sigma),
            jump: None,
            impulse: Arc::new(|_, _, b: &Mark| b.as_scalar()),
        },
        rewards: RewardSpec {
            running: Arc::new(move |_, y: f64| {
                let d = y - center;
                1.0 - scale * d * d
            }),
            pieces: vec![CostPiece {
                domain: MarkSet::interval(lo, hi, 0),
                rate: Arc::new(move |_, y: f64, b: &Mark| {
                    fixed + prop * (y - b.as_scalar()).abs()
                }),
            }],
            terminal: None,
            discount: Arc::new(move |t| rho * t),
            epsilon: rho,
            floor: fixed,
        },
        growth: GrowthParams {
            q: 2,
            m: 0,
            lipschitz: 1.0,
            impulse_bound: spec.y_max,
        },
        marks: MarkSet::finite_scalars(&spec.targets),
        horizon: HorizonMode::Infinite,
        information: Information::Full,
        x0: 0.0,
        pre_history: constant_pre_history(0.0),
    }
}

// ---------------------------------------------------------------------------
// Discounted tail-decay family (rho(t) = t)
// ---------------------------------------------------------------------------

/// Stationary three-state instance with unit discount rate, parametrized by
/// the truncation horizon; used to measure tail decay of the value in `T`.
pub fn tail_decay_instance(t_max: f64) -> FiniteInstance {
    let step = 0.25;
    let n_steps = (t_max / step).round() as usize;
    let kernel = vec![
        vec![0.6, 0.3, 0.1],
        vec![0.25, 0.5, 0.25],
        vec![0.1, 0.3, 0.6],
    ];
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * step).collect();
    FiniteInstance {
        name: format!("tail-decay-T{t_max}"),
        lattice: LatticeModel::stationary(kernel, n_steps, Information::Full).unwrap(),
        x0: 0,
        mark_labels: vec![1.0, 2.0],
        flow: vec![vec![0.05, 0.25, 0.45]; n_steps],
        cost: vec![vec![vec![0.08, 0.13]; 3]; n_steps + 1],
        impulse: vec![vec![vec![1, 2]; 3]; n_steps + 1],
        discount: times.iter().map(|&t| (-t).exp()).collect(),
        k_max: 6,
        horizon: LatticeHorizon::Infinite,
        cost_floor: 0.08,
        times,
    }
}

// ---------------------------------------------------------------------------
// Shipped finite instances
// ---------------------------------------------------------------------------

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Two mixing states; pushing the state up is profitable a couple of times.
pub fn shipped_two_state_switch() -> FiniteInstance {
    let n_steps = 12;
    let kernel = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.25).collect();
    FiniteInstance {
        name: "two_state_switch".into(),
        lattice: LatticeModel::stationary(kernel, n_steps, Information::Full).unwrap(),
        x0: 0,
        mark_labels: vec![0.0, 1.0],
        flow: vec![vec![0.0, 0.55]; n_steps],
        cost: vec![vec![vec![0.45, 0.3], vec![0.45, 0.3]]; n_steps + 1],
        impulse: vec![vec![vec![0, 1], vec![0, 1]]; n_steps + 1],
        discount: times.iter().map(|&t| (-0.2 * t).exp()).collect(),
        k_max: 3,
        horizon: LatticeHorizon::Infinite,
        cost_floor: 0.3,
        times,
    }
}

/// Six states decaying stochastically; impulses ratchet the state back up,
/// profitably several times over.
pub fn shipped_ratchet() -> FiniteInstance {
    let n_states = 6;
    let n_steps = 16;
    let mut kernel = vec![vec![0.0; n_states]; n_states];
    for (x, row) in kernel.iter_mut().enumerate() {
        let down = x.saturating_sub(1);
        let up = (x + 1).min(n_states - 1);
        row[down] += 0.6;
        row[x] += 0.3;
        row[up] += 0.1;
    }
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.25).collect();
    FiniteInstance {
        name: "ratchet".into(),
        lattice: LatticeModel::stationary(kernel, n_steps, Information::Full).unwrap(),
        x0: 2,
        mark_labels: vec![1.0, 2.0],
        flow: (0..n_steps)
            .map(|_| (0..n_states).map(|x| 0.22 * x as f64).collect())
            .collect(),
        cost: vec![vec![vec![0.35, 0.75]; n_states]; n_steps + 1],
        impulse: (0..=n_steps)
            .map(|_| {
                (0..n_states)
                    .map(|x| vec![(x + 2).min(n_states - 1), n_states - 1])
                    .collect()
            })
            .collect(),
        discount: times.iter().map(|&t| (-0.1 * t).exp()).collect(),
        k_max: 3,
        horizon: LatticeHorizon::Infinite,
        cost_floor: 0.35,
        times,
    }
}

/// Seeded random instance: five states, sixteen steps, three marks.
pub fn shipped_random_a() -> FiniteInstance {
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let n_states = 5;
    let n_steps = 16;
    let mut kernel = vec![vec![0.0f64; n_states]; n_states];
    for row in kernel.iter_mut() {
        let raw: Vec<f64> = (0..n_states).map(|_| 0.1 + rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        for (c, r) in row.iter_mut().zip(&raw) {
            *c = round6(r / sum);
        }
        let partial: f64 = row[..n_states - 1].iter().sum();
        row[n_states - 1] = 1.0 - partial;
    }
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.125).collect();
    let flow = (0..n_steps)
        .map(|_| (0..n_states).map(|_| round6(rng.random::<f64>() * 2.5 - 1.0)).collect())
        .collect();
    let cost = (0..=n_steps)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..3).map(|_| round6(0.25 + rng.random::<f64>())).collect())
                .collect()
        })
        .collect();
    let impulse = (0..=n_steps)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..3).map(|_| rng.random_range(0..n_states)).collect())
                .collect()
        })
        .collect();
    let instance = FiniteInstance {
        name: "random_a".into(),
        lattice: LatticeModel::new(
            n_states,
            vec![kernel; n_steps],
            Information::Full,
        )
        .unwrap(),
        x0: 0,
        mark_labels: vec![0.0, 1.0, 2.0],
        flow,
        cost,
        impulse,
        discount: times.iter().map(|&t| (-0.15 * t).exp()).collect(),
        k_max: 3,
        horizon: LatticeHorizon::Infinite,
        cost_floor: 0.25,
        times,
    };
    instance.validate().expect("generated instance is valid");
    instance
}

/// Seeded random instance with an observable random horizon.
pub fn shipped_random_b() -> FiniteInstance {
    let mut rng = ChaCha12Rng::seed_from_u64(1311);
    let n_states = 4;
    let n_steps = 14;
    let mut kernel = vec![vec![0.0f64; n_states]; n_states];
    for row in kernel.iter_mut() {
        let raw: Vec<f64> = (0..n_states).map(|_| 0.15 + rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        for (c, r) in row.iter_mut().zip(&raw) {
            *c = round6(r / sum);
        }
        let partial: f64 = row[..n_states - 1].iter().sum();
        row[n_states - 1] = 1.0 - partial;
    }
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.25).collect();
    let psi = (0..=n_steps)
        .map(|_| (0..n_states).map(|_| round6(rng.random::<f64>() * 3.0 - 1.0)).collect())
        .collect();
    let flow = (0..n_steps)
        .map(|_| (0..n_states).map(|_| round6(rng.random::<f64>() - 0.4)).collect())
        .collect();
    let cost = (0..=n_steps)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..3).map(|_| round6(0.3 + 0.7 * rng.random::<f64>())).collect())
                .collect()
        })
        .collect();
    let impulse = (0..=n_steps)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..3).map(|_| rng.random_range(0..n_states)).collect())
                .collect()
        })
        .collect();
    let instance = FiniteInstance {
        name: "random_b".into(),
        lattice: LatticeModel::new(
            n_states,
            vec![kernel; n_steps],
            Information::Full,
        )
        .unwrap(),
        x0: 1,
        mark_labels: vec![-1.0, 0.0, 1.0],
        flow,
        cost,
        impulse,
        discount: times.iter().map(|&t| (-0.1 * t).exp()).collect(),
        k_max: 2,
        horizon: LatticeHorizon::Random {
            pmf: vec![(5, 0.3), (9, 0.4), (14, 0.3)],
            psi,
        },
        cost_floor: 0.3,
        times,
    };
    instance.validate().expect("generated instance is valid");
    instance
}

/// Deterministic cyclic dynamics under the trivial filtration with a random
/// horizon; enumeration-friendly.
pub fn shipped_trivial_det() -> FiniteInstance {
    let n_states = 3;
    let n_steps = 10;
    let mut kernel = vec![vec![0.0; n_states]; n_states];
    for (x, row) in kernel.iter_mut().enumerate() {
        row[(x + 1) % n_states] = 1.0;
    }
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.25).collect();
    let psi = (0..=n_steps)
        .map(|i| (0..n_states).map(|x| 0.7 * x as f64 + 0.05 * i as f64).collect())
        .collect();
    FiniteInstance {
        name: "trivial_det".into(),
        lattice: LatticeModel::stationary(kernel, n_steps, Information::Trivial).unwrap(),
        x0: 0,
        mark_labels: vec![0.0, 1.0],
        flow: vec![vec![0.1, -0.05, 0.3]; n_steps],
        cost: vec![vec![vec![0.2, 0.5]; n_states]; n_steps + 1],
        impulse: (0..=n_steps)
            .map(|_| (0..n_states).map(|x| vec![0, (x + 2) % n_states]).collect())
            .collect(),
        discount: vec![1.0; n_steps + 1],
        k_max: 2,
        horizon: LatticeHorizon::Random {
            pmf: vec![(4, 0.5), (8, 0.5)],
            psi,
        },
        cost_floor: 0.2,
        times,
    }
}

/// Deterministic decay under the trivial filtration; impulses reset the
/// state to the top, profitably about twice.
pub fn shipped_trivial_ramp() -> FiniteInstance {
    let n_states = 4;
    let n_steps = 8;
    let mut kernel = vec![vec![0.0; n_states]; n_states];
    for (x, row) in kernel.iter_mut().enumerate() {
        row[x.saturating_sub(1)] = 1.0;
    }
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * 0.5).collect();
    FiniteInstance {
        name: "trivial_ramp".into(),
        lattice: LatticeModel::stationary(kernel, n_steps, Information::Trivial).unwrap(),
        x0: 3,
        mark_labels: vec![0.0, 1.0],
        flow: (0..n_steps)
            .map(|_| (0..n_states).map(|x| 0.3 * x as f64).collect())
            .collect(),
        cost: vec![vec![vec![0.4, 0.5]; n_states]; n_steps + 1],
        impulse: vec![vec![vec![n_states - 1, n_states - 1]; n_states]; n_steps + 1],
        discount: vec![1.0; n_steps + 1],
        k_max: 2,
        horizon: LatticeHorizon::Infinite,
        cost_floor: 0.4,
        times,
    }
}

/// One step, two states: intervening at the root turns a terminal reward of
/// 0 into 5 at cost 1 (hand value 4).
pub fn shipped_single_step() -> FiniteInstance {
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

/// All shipped finite instances, as used by the verification suites.  The
/// same instances live as JSON files under `data/finite/`, which a test
/// keeps in sync with these builders.
pub fn shipped_instances() -> Vec<FiniteInstance> {
    vec![
        shipped_two_state_switch(),
        shipped_ratchet(),
        shipped_random_a(),
        shipped_random_b(),
        shipped_trivial_det(),
        shipped_trivial_ramp(),
        shipped_single_step(),
    ]
}

/// The shipped instances that admit open-loop enumeration (deterministic
/// kernels without an observable random horizon).
pub fn enumeration_instances() -> Vec<FiniteInstance> {
    vec![
        shipped_trivial_det(),
        shipped_trivial_ramp(),
        shipped_single_step(),
        example_instance(2),
        example_instance(3),
    ]
}

// ---------------------------------------------------------------------------
// SFDE problems for the simulation diagnostics
// ---------------------------------------------------------------------------

fn unit_cost_piece(lo: f64, hi: f64) -> Vec<CostPiece> {
    vec![CostPiece {
        domain: MarkSet::interval(lo, hi, 0),
        rate: Arc::new(|_, _, _| 1.0),
    }]
}

/// Black-Scholes-type dynamics `a = 0.1 x`, `sigma = 0.2 x`, no jumps.
pub fn bs_problem() -> ProblemSpec {
    ProblemSpec {
        name: "bs".into(),
        coefficients: Coefficients {
            drift: Arc::new(|_, v| 0.1 * v.current()),
            diffusion: Arc::new(|_, v| 0.2 * v.current()),
            jump: None,
            impulse: Arc::new(|_, _, b: &Mark| b.as_scalar()),
        },
        rewards: RewardSpec {
            running: Arc::new(|_, _| 0.0),
            pieces: unit_cost_piece(0.0, 2.0),
            terminal: None,
            discount: Arc::new(|_| 0.0),
            epsilon: 0.0,
            floor: 1.0,
        },
        growth: GrowthParams {
            q: 2,
            m: 0,
            lipschitz: 0.2,
            impulse_bound: 2.0,
        },
        marks: MarkSet::interval(0.0, 2.0, 2),
        horizon: HorizonMode::Infinite,
        information: Information::Full,
        x0: 1.0,
        pre_history: constant_pre_history(1.0),
    }
}

/// GBM dynamics with a reset impulse; the flow-continuity suite runs here
/// with `m = 0`.
pub fn flow_gbm_problem() -> ProblemSpec {
    let mut p = bs_problem();
    p.name = "flow-gbm".into();
    p.growth.m = 0;
    p
}

/// Mean-reverting dynamics with a state-bounded impulse map; used by the
/// moment-stability check (`|Gamma| <= K_Gamma`).
pub fn ou_problem() -> ProblemSpec {
    ProblemSpec {
        name: "ou".into(),
        coefficients: Coefficients {
            drift: Arc::new(|_, v| -0.8 * v.current()),
            diffusion: Arc::new(|_, _| 0.3),
            jump: None,
            impulse: Arc::new(|_, _, b: &Mark| b.as_scalar().clamp(-1.5, 1.5)),
        },
        rewards: RewardSpec {
            running: Arc::new(|_, _| 0.0),
            pieces: unit_cost_piece(-1.5, 1.5),
            terminal: None,
            discount: Arc::new(|_| 0.0),
            epsilon: 0.0,
            floor: 1.0,
        },
        growth: GrowthParams {
            q: 2,
            m: 0,
            lipschitz: 0.8,
            impulse_bound: 1.5,
        },
        marks: MarkSet::interval(-1.5, 1.5, 3),
        horizon: HorizonMode::Infinite,
        information: Information::Full,
        x0: 1.0,
        pre_history: constant_pre_history(1.0),
    }
}

/// Bounded running reward with unit discount rate (`rho(t) = t`): the
/// admissibility tail decays at rate about `2 epsilon` in squared moment.
pub fn bounded_discounted_problem() -> ProblemSpec {
    ProblemSpec {
        name: "bounded-discounted".into(),
        coefficients: Coefficients {
            drift: Arc::new(|_, v| 0.05 * v.current()),
            diffusion: Arc::new(|_, _| 0.25),
            jump: None,
            impulse: Arc::new(|_, v, b: &Mark| {
                (v.current() + b.as_scalar()).clamp(-3.0, 3.0)
            }),
        },
        rewards: RewardSpec {
            running: Arc::new(|_, x: f64| 1.0 / (1.0 + x * x)),
            pieces: unit_cost_piece(-1.0, 1.0),
            terminal: None,
            discount: Arc::new(|t| t),
            epsilon: 1.0,
            floor: 1.0,
        },
        growth: GrowthParams {
            q: 2,
            m: 0,
            lipschitz: 1.0,
            impulse_bound: 3.0,
        },
        marks: MarkSet::interval(-1.0, 1.0, 2),
        horizon: HorizonMode::Infinite,
        information: Information::Full,
        x0: 0.0,
        pre_history: constant_pre_history(0.0),
    }
}

/// Undiscounted, non-decaying rewards: horizon selection must fail here.
pub fn non_decaying_problem() -> ProblemSpec {
    let mut p = bounded_discounted_problem();
    p.name = "non-decaying".into();
    p.rewards.running = Arc::new(|_, _| 1.0);
    p.rewards.discount = Arc::new(|_| 0.0);
    p.rewards.epsilon = 0.0;
    p
}

/// Directory of the shipped instance JSON files (kept in sync with the
/// builders by a test).
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/finite")
}
