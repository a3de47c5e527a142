use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the autoregressive panel generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_individuals: usize,
    pub t_steps: usize,
    /// Autoregressive order `p`.
    pub p_order: usize,
    pub dim_x: usize,
    pub dim_u: usize,
    pub rho_w: f64,
    pub rho_x: f64,
    pub rho_u: f64,
    /// Scale of the innovations in the X, U and S recursions.
    pub noise_sd: f64,
    /// Optional additive outcome noise; the reference process has none.
    pub outcome_noise_sd: f64,
    /// Scale of the pre-sample states `X, U, S` at steps `t - i < 1`.
    /// Zero reproduces pure zero padding.
    pub initial_sd: f64,
    /// Redraw autoregressive coefficient sets until every recursion is stable.
    pub stationary: bool,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_individuals: 2000,
            t_steps: 20,
            p_order: 1,
            dim_x: 3,
            dim_u: 3,
            rho_w: 0.5,
            rho_x: 0.5,
            rho_u: 0.5,
            noise_sd: 0.01,
            outcome_noise_sd: 0.0,
            initial_sd: 1.0,
            stationary: true,
            master_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.p_order < 1 {
            return fail("p_order must be >= 1".into());
        }
        if self.t_steps < self.p_order {
            return fail(format!(
                "t_steps ({}) must be >= p_order ({})",
                self.t_steps, self.p_order
            ));
        }
        if self.dim_x < 1 {
            return fail("dim_x must be >= 1".into());
        }
        if self.dim_u < 1 {
            return fail("dim_u must be >= 1".into());
        }
        if self.n_individuals < 1 {
            return fail("n_individuals must be >= 1".into());
        }
        for (name, v) in [
            ("noise_sd", self.noise_sd),
            ("outcome_noise_sd", self.outcome_noise_sd),
            ("initial_sd", self.initial_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite non-negative number"));
            }
        }
        for (name, v) in [("rho_w", self.rho_w), ("rho_x", self.rho_x), ("rho_u", self.rho_u)] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}
