//! Time-varying causal effects from longitudinal panels with hidden
//! time-dependent confounders.
//!
//! The pipeline learns a substitute instrument `L_t` from the covariate
//! history with a recurrent factor model ([`factor`]), then runs
//! per-step two-stage least squares ([`estimate`]). [`datagen`] simulates
//! benchmark panels with a known effect, [`bench`] scores estimators over
//! replicate grids, and [`ingest`] reads real panels from CSV.

pub mod bench;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod estimate;
pub mod factor;
pub mod ingest;
pub mod numkit;
pub mod panel;

pub use error::{Error, Result};
pub use panel::TrajectoryPanel;
