//! Impulse controls: finite sequences of (time, mark) interventions.
//!
//! A control is a sequence `(t_1, .., t_n; b_1, .., b_n)` with nondecreasing
//! times and marks drawn from a compact set `U`.  Controls compose by
//! appending, with appended times clamped up to the last existing time, and
//! truncate to their first `k` interventions.  Equal times are legal and are
//! applied in list order.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// A point of the mark set `U`.  One-dimensional marks are the common case
/// but box-shaped multi-dimensional sets are supported.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct Mark(pub Vec<f64>);

impl Mark {
    pub fn scalar(b: f64) -> Self {
        Mark(vec![b])
    }

    /// Value of a one-dimensional mark.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.0.len(), 1, "mark is not one-dimensional");
        self.0[0]
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order used to break argmax ties: lexicographic on coordinates.
    pub fn total_cmp(&self, other: &Mark) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "(")?;
            for (i, v) in self.0.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, ")")
        }
    }
}

// Controls serialize as an array of {t, b} records; scalar marks are written
// as plain numbers.
impl Serialize for Mark {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            s.serialize_f64(self.0[0])
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Mark {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            Vector(Vec<f64>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Scalar(v) => Mark(vec![v]),
            Raw::Vector(v) => Mark(v),
        })
    }
}

/// The compact mark set `U`: either a finite list of points or a closed box
/// carrying a dyadic discretization level for argmax search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkSet {
    Finite { points: Vec<Mark> },
    Box { lo: Vec<f64>, hi: Vec<f64>, level: u32 },
}

impl MarkSet {
    pub fn finite_scalars(values: &[f64]) -> Self {
        MarkSet::Finite {
            points: values.iter().map(|&v| Mark::scalar(v)).collect(),
        }
    }

    pub fn interval(lo: f64, hi: f64, level: u32) -> Self {
        MarkSet::Box {
            lo: vec![lo],
            hi: vec![hi],
            level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MarkSet::Finite { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidInput("mark set is empty".into()));
                }
                let dim = points[0].dim();
                if points.iter().any(|p| p.dim() != dim) {
                    return Err(Error::InvalidInput("mark dimensions differ".into()));
                }
                if points.iter().flat_map(|p| p.0.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("mark set is not bounded".into()));
                }
            }
            MarkSet::Box { lo, hi, .. } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidInput("box bounds have mismatched dimensions".into()));
                }
                for (l, h) in lo.iter().zip(hi.iter()) {
                    if !l.is_finite() || !h.is_finite() || l > h {
                        return Err(Error::InvalidInput(format!(
                            "box bounds [{l}, {h}] are not a compact interval"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, b: &Mark) -> bool {
        match self {
            MarkSet::Finite { points } => points.iter().any(|p| p == b),
            MarkSet::Box { lo, hi, .. } => {
                b.dim() == lo.len()
                    && b.0
                        .iter()
                        .zip(lo.iter().zip(hi.iter()))
                        .all(|(v, (l, h))| *v >= *l && *v <= *h)
            }
        }
    }

    /// Finite search set used for argmax over `U`.  Finite sets are returned
    /// as-is; boxes are discretized on the dyadic lattice of their level, in
    /// lexicographically ascending order so ties break toward smaller marks.
    pub fn search_points(&self) -> Vec<Mark> {
        match self {
            MarkSet::Finite { points } => {
                let mut pts = points.clone();
                pts.sort_by(|a, b| a.total_cmp(b));
                pts
            }
            MarkSet::Box { lo, hi, level } => {
                let per_dim = (1usize << level) + 1;
                let dim = lo.len();
                let mut out = Vec::new();
                let mut index = vec![0usize; dim];
                loop {
                    let point: Vec<f64> = (0..dim)
                        .map(|d| {
                            if hi[d] == lo[d] {
                                lo[d]
                            } else {
                                lo[d] + (hi[d] - lo[d]) * index[d] as f64 / (per_dim - 1) as f64
                            }
                        })
                        .collect();
                    out.push(Mark(point));
                    // odometer increment, most significant coordinate first
                    let mut d = dim;
                    loop {
                        if d == 0 {
                            return out;
                        }
                        d -= 1;
                        index[d] += 1;
                        if index[d] < per_dim {
                            break;
                        }
                        index[d] = 0;
                    }
                    if index.iter().all(|&i| i == 0) {
                        return out;
                    }
                }
            }
        }
    }
}

/// One intervention: a time and the impulse applied at that time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub t: f64,
    pub b: Mark,
}

/// A finite impulse control.  The empty control denotes doing nothing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImpulseControl {
    interventions: Vec<Intervention>,
}

impl ImpulseControl {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a control, checking that times are nonnegative, finite and
    /// nondecreasing.
    pub fn new(interventions: Vec<Intervention>) -> Result<Self> {
        let ctrl = ImpulseControl { interventions };
        ctrl.check_times()?;
        Ok(ctrl)
    }

    /// Convenience constructor for scalar marks.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(t, b)| Intervention { t, b: Mark::scalar(b) })
                .collect(),
        )
    }

    pub fn single(t: f64, b: Mark) -> Self {
        ImpulseControl {
            interventions: vec![Intervention { t, b }],
        }
    }

    pub fn len(&self) -> usize {
        self.interventions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interventions.is_empty()
    }

    pub fn interventions(&self) -> &[Intervention] {
        &self.interventions
    }

    pub fn last_time(&self) -> Option<f64> {
        self.interventions.last().map(|iv| iv.t)
    }

    fn check_times(&self) -> Result<()> {
        let mut prev = 0.0f64;
        for (i, iv) in self.interventions.iter().enumerate() {
            if !iv.t.is_finite() || iv.t < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "intervention time {} at index {} is not a nonnegative real",
                    iv.t,
                    i + 1
                )));
            }
            if iv.t < prev {
                return Err(Error::InvalidInput(format!(
                    "times decrease at index {}",
                    i + 1
                )));
            }
            prev = iv.t;
        }
        Ok(())
    }

    /// Composition `self o other`: appends `other`'s interventions with their
    /// times clamped up to the last time of `self`.  Marks are never
    /// reordered and existing times are never changed.
    pub fn compose(&self, other: &ImpulseControl) -> ImpulseControl {
        let clamp = self.last_time().unwrap_or(0.0);
        let mut interventions = self.interventions.clone();
        if self.is_empty() {
            interventions.extend(other.interventions.iter().cloned());
        } else {
            interventions.extend(other.interventions.iter().map(|iv| Intervention {
                t: iv.t.max(clamp),
                b: iv.b.clone(),
            }));
        }
        ImpulseControl { interventions }
    }

    /// Appends a single intervention, clamping its time.
    pub fn then(&self, t: f64, b: Mark) -> ImpulseControl {
        self.compose(&ImpulseControl::single(t, b))
    }

    /// Truncation `[v]_k`: the first `min(k, n)` interventions.
    pub fn truncate(&self, k: usize) -> ImpulseControl {
        ImpulseControl {
            interventions: self.interventions[..k.min(self.interventions.len())].to_vec(),
        }
    }

    /// Reports the first violated invariant, or `Ok` if the control is a
    /// valid element of the control set over `marks`.
    pub fn validate(&self, marks: &MarkSet) -> Result<()> {
        self.check_times()?;
        for iv in &self.interventions {
            if !marks.contains(&iv.b) {
                return Err(Error::MarkDomain {
                    mark: iv.b.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ctrl: ImpulseControl = serde_json::from_str(s)?;
        ctrl.check_times()?;
        Ok(ctrl)
    }
}

/// The dyadic time grid `{0, 2^-l, 2*2^-l, ...}` covering `[0, T]`.  The last
/// node is the smallest grid point `>= T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    level: u32,
    horizon: f64,
    n_steps: usize,
}

impl DyadicGrid {
    pub fn new(level: u32, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon {horizon} must be a positive real"
            )));
        }
        if level > 30 {
            return Err(Error::InvalidInput(format!("grid level {level} too large")));
        }
        let step = 0.5f64.powi(level as i32);
        let n_steps = (horizon / step).ceil() as usize;
        Ok(DyadicGrid {
            level,
            horizon,
            n_steps,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn step(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps; there are `n_steps + 1` nodes.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Time of node `i`; exact in floating point since nodes are dyadic.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.time(i)).collect()
    }

    /// Index of the node at time `t`, or an error if `t` is off-grid.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let raw = t / self.step();
        let idx = raw.round();
        if (raw - idx).abs() > 1e-9 || idx < 0.0 || idx as usize > self.n_steps {
            return Err(Error::OffGrid(t));
        }
        Ok(idx as usize)
    }

    /// Nearest grid node to `t` (ties round up), clamped into the grid.
    pub fn snap(&self, t: f64) -> f64 {
        let idx = (t / self.step()).round().clamp(0.0, self.n_steps as f64);
        self.time(idx as usize)
    }
}
