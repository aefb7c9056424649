//! Solver library for infinite- and random-horizon stochastic impulse
//! control.
//!
//! The pieces, bottom up:
//!
//! - [`control`]: impulse controls (time/mark sequences) with composition
//!   and truncation, mark sets, dyadic time grids.
//! - [`path`]: cadlag trajectories on a grid with delayed/windowed reads
//!   and feature extraction for regression state.
//! - [`sfde`]: Euler simulation of impulsively controlled functional SDEs
//!   driven by Brownian motion and compound-Poisson jumps, with
//!   common-random-number support and moment/flow diagnostics.
//! - [`reward`]: running rewards, piecewise intervention costs, terminal
//!   rewards, discounting, the doubly truncated reward and admissibility
//!   diagnostics.
//! - [`snell`]: exact and regression-based Snell envelopes, optimal
//!   stopping extraction, Doob-Meyer decomposition.
//! - [`solver`]: value iteration over the number of interventions (exact
//!   lattice and least-squares Monte-Carlo backends), horizon selection,
//!   policy extraction and evaluation.
//! - [`oracle`]: independent ground truth (exhaustive dynamic programming,
//!   open-loop enumeration, the closed-form two-point-horizon example).
//! - [`instances`]: built-in problems; [`verify`]: check suites.
//!
//! All randomness is ChaCha12 with explicit seeds and one stream per path;
//! identical inputs reproduce results bit for bit.

pub mod control;
pub mod error;
pub mod instances;
pub mod oracle;
pub mod path;
pub mod reward;
pub mod sfde;
pub mod snell;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
