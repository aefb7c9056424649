//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, simulation and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A value or table failed a structural precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A mark lies in none of the cost-piece domains.
    #[error("mark {mark} lies outside every cost-piece domain")]
    MarkDomain { mark: String },

    /// The impulse map returned a state violating |Gamma| <= K_Gamma v |x|.
    #[error("impulse map violated its growth bound at t={t}: |state|={value:.6e} > bound={bound:.6e}")]
    GrowthBound { t: f64, value: f64, bound: f64 },

    /// The Euler scheme produced a non-finite state.
    #[error("simulation diverged at step {step} (t={t}): state is not finite")]
    SimulationDiverged { step: usize, t: f64 },

    /// A time does not lie on the simulation grid.
    #[error("time {0} is not a grid node; intervention times must be snapped to the grid")]
    OffGrid(f64),

    /// No reward decay could be fitted; the caller must pick a horizon.
    #[error("horizon selection failed: {0}; supply the horizon manually")]
    HorizonSelection(String),

    /// An internal invariant of the solver was violated.
    #[error("internal consistency: {0}")]
    InternalConsistency(String),

    /// A finite instance exceeds the documented oracle size cap.
    #[error("oracle size cap exceeded: {0}")]
    OracleCap(String),

    /// Least-squares system remained singular after the ridge fallback.
    #[error("regression failed: {0}")]
    Regression(String),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
