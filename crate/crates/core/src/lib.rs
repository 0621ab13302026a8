//! Deterministic scoring engine for prediction competitions.
//!
//! Experts submit predictions on a shared set of tasks; a competition
//! mechanism scores every expert against a reference solution and picks the
//! winner by minimal summed squared error. Three mechanisms are provided:
//!
//! - **standard**: the reference is the realized outcomes;
//! - **oracular**: the reference is the ground truth (for simulation and
//!   analysis; real datasets never have it);
//! - **WOMAC**: each expert on each task is scored against a jackknifed
//!   meta-learner fit — peers weighted by their accuracy against outcomes on
//!   the *other* tasks, with the expert's own reports excluded from the fit —
//!   either a top-k peer average or a screened ridge regression.
//!
//! Around the mechanisms: a Monte Carlo simulator for win-probability
//! estimates under configurable worlds and reporting strategies
//! ([`sim`]), a train/test correlation harness ([`experiments`]), and
//! long-form CSV ingestion with completion/activity filters ([`data`]).
//!
//! Everything is reproducible: a single seed drives all randomness through
//! numbered streams ([`rng`]), ties break to the lowest index, reductions
//! run in fixed task order, and parallel paths write to pre-allocated slots
//! so results never depend on thread count or schedule.

pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mechanisms;
pub mod meta;
pub mod rng;
pub mod scoring;
pub mod sim;

pub use error::{Error, Result};
