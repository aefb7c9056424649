//! Cadlag trajectories on a dyadic grid.
//!
//! A path stores, per grid node, a left limit and a right value; the two
//! coincide except at nodes where a dynamics jump or an impulse was recorded.
//! Between nodes the path is held constant at the left node's right value
//! (the Euler convention), which makes the left-endpoint quadrature of the
//! running reward well defined.  Times before zero are served by the
//! deterministic bounded pre-history `x`.

use std::sync::Arc;

use crate::control::DyadicGrid;
use crate::error::{Error, Result};

/// Bounded cadlag pre-history for `t < 0`.
pub type PreHistory = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant_pre_history(value: f64) -> PreHistory {
    Arc::new(move |_| value)
}

/// Which side of a node to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A simulated trajectory.  Immutable once built; shared freely.
#[derive(Clone)]
pub struct CadlagPath {
    grid: DyadicGrid,
    left: Vec<f64>,
    right: Vec<f64>,
    /// Node received a dynamics jump or an impulse.
    jump: Vec<bool>,
    pre_history: PreHistory,
}

impl std::fmt::Debug for CadlagPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CadlagPath")
            .field("grid", &self.grid)
            .field("nodes", &self.left.len())
            .finish()
    }
}

impl CadlagPath {
    pub fn new(
        grid: DyadicGrid,
        left: Vec<f64>,
        right: Vec<f64>,
        jump: Vec<bool>,
        pre_history: PreHistory,
    ) -> Result<Self> {
        let n = grid.n_nodes();
        if left.len() != n || right.len() != n || jump.len() != n {
            return Err(Error::InvalidInput(format!(
                "path arrays must have one entry per grid node ({n})"
            )));
        }
        for i in 0..n {
            if !left[i].is_finite() || !right[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "path value at node {i} is not finite"
                )));
            }
            if !jump[i] && left[i] != right[i] {
                return Err(Error::InvalidInput(format!(
                    "left and right values differ at node {i} without a recorded jump"
                )));
            }
        }
        Ok(CadlagPath {
            grid,
            left,
            right,
            jump,
            pre_history,
        })
    }

    /// A constant path, convenient in tests.
    pub fn constant(grid: DyadicGrid, value: f64) -> Self {
        let n = grid.n_nodes();
        CadlagPath {
            grid,
            left: vec![value; n],
            right: vec![value; n],
            jump: vec![false; n],
            pre_history: constant_pre_history(value),
        }
    }

    /// A path interpolating the given node values with no jumps recorded.
    pub fn from_nodes(grid: DyadicGrid, values: Vec<f64>, pre_history: PreHistory) -> Result<Self> {
        let jump = vec![false; values.len()];
        CadlagPath::new(grid, values.clone(), values, jump, pre_history)
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn n_nodes(&self) -> usize {
        self.left.len()
    }

    pub fn pre_history(&self) -> &PreHistory {
        &self.pre_history
    }

    pub fn left_at_node(&self, i: usize) -> f64 {
        self.left[i]
    }

    pub fn right_at_node(&self, i: usize) -> f64 {
        self.right[i]
    }

    pub fn has_jump_at_node(&self, i: usize) -> bool {
        self.jump[i]
    }

    /// Reads the path at time `t`.  Negative times come from the pre-history.
    /// A left read at a jump node returns the pre-jump value; between nodes
    /// the path equals the previous node's right value.
    pub fn read(&self, t: f64, side: Side) -> Result<f64> {
        if t < 0.0 {
            return Ok((self.pre_history)(t));
        }
        let step = self.grid.step();
        let raw = t / step;
        if raw > self.grid.n_steps() as f64 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "time {t} lies beyond the simulated horizon {}",
                self.grid.time(self.grid.n_steps())
            )));
        }
        let nearest = raw.round();
        if (raw - nearest).abs() <= 1e-9 {
            let i = (nearest as usize).min(self.grid.n_steps());
            return Ok(match side {
                Side::Left => {
                    if i == 0 {
                        self.left[0]
                    } else {
                        self.left[i]
                    }
                }
                Side::Right => self.right[i],
            });
        }
        // strictly between nodes: constant at the left node's right value
        Ok(self.right[raw.floor() as usize])
    }

    /// Max of |X| over grid nodes in `[s, t]`, both sides at jump nodes.
    pub fn sup_norm(&self, s: f64, t: f64) -> Result<f64> {
        if !(s <= t) {
            return Err(Error::InvalidInput(format!("empty window [{s}, {t}]")));
        }
        let step = self.grid.step();
        let lo = ((s / step).ceil().max(0.0)) as usize;
        let hi = ((t / step).floor() as usize).min(self.grid.n_steps());
        if lo > hi {
            return Err(Error::InvalidInput(format!(
                "window [{s}, {t}] contains no grid node"
            )));
        }
        let mut m: f64 = 0.0;
        for i in lo..=hi {
            m = m.max(self.left[i].abs()).max(self.right[i].abs());
        }
        Ok(m)
    }

    /// CSV with columns `t,X_left,X_right,jump_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,X_left,X_right,jump_flag\n");
        for i in 0..self.n_nodes() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.grid.time(i),
                self.left[i],
                self.right[i],
                u8::from(self.jump[i]),
            ));
        }
        out
    }
}

/// Read access shared by completed paths and in-flight simulations, letting
/// feature extraction run on either.
pub trait PathRead {
    fn grid_step(&self) -> f64;
    /// Newest node with a defined value.
    fn last_node(&self) -> usize;
    /// Cadlag (right) value at a node `<= last_node`.
    fn node_value(&self, i: usize) -> f64;
    /// Pre-history for `t < 0`.
    fn pre_zero(&self, t: f64) -> f64;

    /// Value at `s` (held constant between nodes, pre-history before zero).
    fn value_at(&self, s: f64) -> f64 {
        if s < 0.0 {
            return self.pre_zero(s);
        }
        let raw = s / self.grid_step();
        let nearest = raw.round();
        let idx = if (raw - nearest).abs() <= 1e-9 {
            nearest as usize
        } else {
            raw.floor() as usize
        };
        self.node_value(idx.min(self.last_node()))
    }
}

impl PathRead for CadlagPath {
    fn grid_step(&self) -> f64 {
        self.grid.step()
    }
    fn last_node(&self) -> usize {
        self.grid.n_steps()
    }
    fn node_value(&self, i: usize) -> f64 {
        self.right[i]
    }
    fn pre_zero(&self, t: f64) -> f64 {
        (self.pre_history)(t)
    }
}

/// Kernel of a running-integral feature `int_0^t k(t - s) X_s ds`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegralKernel {
    /// Plain integral over `[t - window, t]` (whole past if `window` absent).
    Plain { window: Option<f64> },
    /// Exponentially discounted integral with the given decay rate.
    ExpDecay { rate: f64 },
}

/// Which functionals of the past are extracted as regression state.
///
/// Every feature is a measurable function of the path restricted to times
/// `<= t`; nothing reads ahead of the evaluation time.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FeatureSpec {
    pub include_value: bool,
    pub include_running_sup: bool,
    /// Delayed reads `X_{t - delay}` (pre-history serves negative times).
    pub delays: Vec<f64>,
    pub integrals: Vec<IntegralKernel>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            include_value: true,
            include_running_sup: false,
            delays: Vec::new(),
            integrals: Vec::new(),
        }
    }
}

impl FeatureSpec {
    pub fn len(&self) -> usize {
        usize::from(self.include_value)
            + usize::from(self.include_running_sup)
            + self.delays.len()
            + self.integrals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extracts the feature vector at node `i` of `path`.
    pub fn extract(&self, path: &CadlagPath, node: usize) -> Vec<f64> {
        self.extract_read(path, node)
    }

    /// Generic extraction over any [`PathRead`] source.
    pub fn extract_read<P: PathRead + ?Sized>(&self, path: &P, node: usize) -> Vec<f64> {
        let step = path.grid_step();
        let t = node as f64 * step;
        let mut out = Vec::with_capacity(self.len());
        if self.include_value {
            out.push(path.node_value(node));
        }
        if self.include_running_sup {
            let mut m = 0.0f64;
            for j in 0..=node {
                m = m.max(path.node_value(j).abs());
            }
            out.push(m);
        }
        for &d in &self.delays {
            out.push(path.value_at(t - d));
        }
        for kernel in &self.integrals {
            let mut acc = 0.0;
            match kernel {
                IntegralKernel::Plain { window } => {
                    let from = window.map_or(0.0, |w| (t - w).max(0.0));
                    let lo = (from / step).ceil() as usize;
                    for j in lo..node {
                        acc += path.node_value(j) * step;
                    }
                }
                IntegralKernel::ExpDecay { rate } => {
                    for j in 0..node {
                        let s = j as f64 * step;
                        acc += (-(rate) * (t - s)).exp() * path.node_value(j) * step;
                    }
                }
            }
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(level: u32, horizon: f64) -> DyadicGrid {
        DyadicGrid::new(level, horizon).unwrap()
    }

    #[test]
    fn constant_path_reads_constant() {
        let p = CadlagPath::constant(grid(3, 1.0), 2.5);
        for &t in &[0.0, 0.19, 0.5, 1.0] {
            assert_eq!(p.read(t, Side::Left).unwrap(), 2.5);
            assert_eq!(p.read(t, Side::Right).unwrap(), 2.5);
        }
    }

    #[test]
    fn jump_node_distinguishes_sides() {
        let g = grid(1, 1.0);
        // impulse at t = 0.5: left 0, right 3 (describes X jumping to Gamma)
        let p = CadlagPath::new(
            g,
            vec![0.0, 0.0, 3.0],
            vec![0.0, 3.0, 3.0],
            vec![false, true, false],
            constant_pre_history(0.0),
        )
        .unwrap();
        assert_eq!(p.read(0.5, Side::Left).unwrap(), 0.0);
        assert_eq!(p.read(0.5, Side::Right).unwrap(), 3.0);
    }

    #[test]
    fn negative_times_use_pre_history() {
        let p = CadlagPath::constant(grid(2, 1.0), 1.0);
        let p = CadlagPath::new(
            p.grid().clone(),
            vec![1.0; 5],
            vec![1.0; 5],
            vec![false; 5],
            Arc::new(|t: f64| 2.0 * t),
        )
        .unwrap();
        assert_eq!(p.read(-0.5, Side::Right).unwrap(), -1.0);
    }

    #[test]
    fn sup_norm_of_ramp_and_jump() {
        let g = grid(3, 1.0);
        let values: Vec<f64> = (0..g.n_nodes()).map(|i| g.time(i)).collect();
        let ramp = CadlagPath::from_nodes(g.clone(), values, constant_pre_history(0.0)).unwrap();
        assert_eq!(ramp.sup_norm(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(CadlagPath::constant(g.clone(), 0.0).sup_norm(0.0, 1.0).unwrap(), 0.0);

        // a single jump to -3 counts through its absolute value
        let mut left = vec![0.0; g.n_nodes()];
        let mut right = vec![0.0; g.n_nodes()];
        let mut jump = vec![false; g.n_nodes()];
        for i in 4..g.n_nodes() {
            left[i] = -3.0;
            right[i] = -3.0;
        }
        left[4] = 0.0;
        jump[4] = true;
        let p = CadlagPath::new(g, left, right, jump, constant_pre_history(0.0)).unwrap();
        assert_eq!(p.sup_norm(0.0, 1.0).unwrap(), 3.0);
    }

    #[test]
    fn sup_norm_rejects_empty_window() {
        let p = CadlagPath::constant(grid(2, 1.0), 1.0);
        assert!(p.sup_norm(0.6, 0.4).is_err());
    }

    #[test]
    fn read_beyond_horizon_errors() {
        let p = CadlagPath::constant(grid(2, 1.0), 1.0);
        assert!(p.read(1.5, Side::Right).is_err());
    }

    #[test]
    fn csv_has_expected_header_and_rows() {
        let p = CadlagPath::constant(grid(1, 1.0), 1.0);
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,X_left,X_right,jump_flag");
        assert_eq!(lines.next().unwrap(), "0,1,1,0");
        assert_eq!(csv.lines().count(), 1 + p.n_nodes());
    }

    #[test]
    fn features_have_no_lookahead() {
        let g = grid(2, 1.0);
        // path that explodes at the last node; features at node 2 must not see it
        let values = vec![1.0, 1.0, 1.0, 1.0, 100.0];
        let p = CadlagPath::from_nodes(g, values, constant_pre_history(1.0)).unwrap();
        let spec = FeatureSpec {
            include_value: true,
            include_running_sup: true,
            delays: vec![0.25],
            integrals: vec![IntegralKernel::Plain { window: None }],
        };
        let f = spec.extract(&p, 2);
        assert_eq!(f.len(), 4);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 1.0, "running sup must ignore the future");
        assert_eq!(f[2], 1.0);
        assert!((f[3] - 0.5).abs() < 1e-12, "plain integral over [0, 0.5)");
    }

    proptest! {
        #[test]
        fn sides_agree_off_jump_nodes(values in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let g = grid(3, 1.0);
            let p = CadlagPath::from_nodes(g.clone(), values, constant_pre_history(0.0)).unwrap();
            for i in 0..g.n_nodes() {
                let t = g.time(i);
                prop_assert_eq!(p.read(t, Side::Left).unwrap(), p.read(t, Side::Right).unwrap());
            }
        }

        #[test]
        fn sup_norm_monotone_in_window(
            values in proptest::collection::vec(-5.0f64..5.0, 9),
            a in 0.0f64..0.4,
            b in 0.6f64..1.0,
        ) {
            let g = grid(3, 1.0);
            let p = CadlagPath::from_nodes(g, values, constant_pre_history(0.0)).unwrap();
            let inner = p.sup_norm(a, b).unwrap();
            let outer = p.sup_norm(0.0, 1.0).unwrap();
            prop_assert!(outer >= inner);
        }
    }
}
