//! Synthetic longitudinal panels from a p-order autoregressive process with
//! hidden confounders `U` and a hidden time-dependent instrument `S`.
//!
//! Interpretation notes:
//! - `S` is scalar. Vector quantities entering a scalar equation (`δ_i X` in
//!   the `S` recursion, `ρ_X X` and `ρ_U U` in the outcome) enter through the
//!   sum of their components.
//! - The self-lag of `S` reads `γ_i S_{t−i}`.
//! - Lags that reach before the first step read a pre-sample state drawn
//!   `N(0, initial_sd²)`; `initial_sd = 0` gives plain zero padding.
//! - With `stationary` set (the default) the autoregressive coefficient block
//!   is redrawn until the X, U and S recursions are stable. Unconstrained
//!   draws of `N(0, 1)` self-lags at `p = 1` grow geometrically over 20 steps.

mod coefficients;
mod config;
mod simulate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use coefficients::{draw_coefficients, recursion_is_stable, PanelCoefficients};
pub use config::SimConfig;
pub use simulate::{replicate_seed, simulate_panel, simulate_with_coefficients, SyntheticPanel};

pub use crate::panel::TrajectoryPanel;

use crate::error::{Error, Result};

/// JSON sidecar written next to an exported synthetic panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub config: SimConfig,
    pub replicate: u64,
    pub coefficients: PanelCoefficients,
    pub true_effect: f64,
    pub panel_fingerprint: String,
}

impl SyntheticPanel {
    pub fn sidecar(&self) -> TruthSidecar {
        TruthSidecar {
            config: self.config.clone(),
            replicate: self.replicate,
            coefficients: self.coefficients.clone(),
            true_effect: self.true_effect,
            panel_fingerprint: self.observed.fingerprint(),
        }
    }

    /// Writes the observed panel as long-format CSV plus the truth sidecar JSON.
    pub fn write_files(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        crate::ingest::write_panel_csv(&self.observed, csv_path)?;
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(sidecar_path, json + "\n").map_err(|e| Error::io(sidecar_path, e))
    }
}
