//! Value iteration over the number of interventions, policy extraction and
//! policy evaluation.
//!
//! The iteration starts from the no-intervention conditional reward and, at
//! each stage `k`, takes the Snell envelope (with flow) of the intervention
//! obstacle built from stage `k - 1`:
//!
//! ```text
//! Y^0 = conditional expected reward with no interventions,
//! Y^k = envelope of  max_b { -cost(t, x, b) + Y^{k-1}(t, Gamma(t, x, b)) }.
//! ```
//!
//! Stages increase pointwise and stabilize no later than the domination cap
//! (once an extra intervention costs more than any remaining gain).  Two
//! backends share this structure: the exact lattice backend in
//! [`lattice`] and the least-squares Monte-Carlo backend in [`regression`].

pub mod lattice;
pub mod regression;

use crate::control::DyadicGrid;
use crate::error::{Error, Result};
use crate::reward::admissibility_report;
use crate::sfde::ProblemSpec;
use crate::control::ImpulseControl;

/// Options of the exact lattice backend.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stage limit; `None` uses the instance's domination cap.
    pub k_max: Option<usize>,
    /// Convergence threshold on the sup-norm stage increment.
    pub tol: f64,
    /// Restricts interventions to nodes with time strictly below the cutoff
    /// (the truncated-horizon iterates used by the sandwich diagnostics).
    pub intervention_cutoff: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            k_max: None,
            tol: 1e-6,
            intervention_cutoff: None,
        }
    }
}

/// Smallest grid-aligned horizon `T` with `c e^{-rate T} < tol`.
pub fn horizon_from_constants(rate: f64, c: f64, tol: f64, grid_step: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::HorizonSelection(format!(
            "nonpositive decay rate {rate}"
        )));
    }
    if !(tol > 0.0) || !(c > 0.0) {
        return Err(Error::HorizonSelection("need positive constant and tolerance".into()));
    }
    let t = (c / tol).ln() / rate;
    let t = t.max(0.0);
    Ok((t / grid_step).ceil() * grid_step)
}

/// Result of the data-driven horizon choice.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HorizonChoice {
    pub horizon: f64,
    pub fitted_rate: f64,
    pub fitted_c: f64,
    /// The tail bound `c e^{-rate T}` recorded at the chosen horizon.
    pub bound_at_horizon: f64,
}

/// Picks the truncation horizon for an infinite-horizon problem by fitting
/// the tail of the reward's future impact (measured by the admissibility
/// diagnostics on a probe grid) and solving `c e^{-rate T} < tol`.
///
/// The measured quantity decays like the squared tail, so the fitted rate is
/// halved to recover the first-moment rate.  Errors when no decay is found.
pub fn choose_horizon(
    problem: &ProblemSpec,
    probe_grid: &DyadicGrid,
    t_list: &[f64],
    tol: f64,
    n_paths: usize,
    seed: u64,
) -> Result<HorizonChoice> {
    let family = vec![ImpulseControl::empty()];
    let report = admissibility_report(problem, probe_grid, &family, t_list, n_paths, seed)?;
    let (rate2, log_c2) = match (report.fitted_rate, report.fitted_log_c) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(Error::HorizonSelection(
                "tail fit failed (no positive rows)".into(),
            ))
        }
    };
    if rate2 <= 0.02 {
        return Err(Error::HorizonSelection(format!(
            "no reward decay detected (fitted squared-tail rate {rate2:.4})"
        )));
    }
    let rate = 0.5 * rate2;
    let c = (0.5 * log_c2).exp();
    let horizon = horizon_from_constants(rate, c, tol, probe_grid.step())?;
    Ok(HorizonChoice {
        horizon,
        fitted_rate: rate,
        fitted_c: c,
        bound_at_horizon: c * (-rate * horizon).exp(),
    })
}

/// Monte-Carlo policy evaluation summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PolicyEvaluation {
    pub mean: f64,
    pub stderr: f64,
    /// `histogram[n]` = number of paths that used exactly `n` interventions.
    pub histogram: Vec<usize>,
    pub n_paths: usize,
}

/// Convergence log rows shared by both backends.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub sup_increment: f64,
    pub wall_time: f64,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("k,sup_increment,wall_time\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.k, r.sup_increment, r.wall_time));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_solves_the_exponential_bound() {
        // rate 1, c 1, tol e^-8: T = 8 exactly
        let t = horizon_from_constants(1.0, 1.0, (-8.0f64).exp(), 0.25).unwrap();
        assert_eq!(t, 8.0);
        // grid alignment rounds upward
        let t = horizon_from_constants(1.0, 1.0, (-8.1f64).exp(), 0.25).unwrap();
        assert_eq!(t, 8.25);
        assert!(horizon_from_constants(0.0, 1.0, 1e-4, 0.25).is_err());
    }
}
