use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::numkit::RngStream;

/// Upper bound on redraws of the autoregressive block under `stationary`.
const MAX_REDRAWS: usize = 100_000;

/// Per-replicate coefficients of the generator, drawn once before the time recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelCoefficients {
    /// X self-lags, `N(0, 0.5²)`.
    pub alpha: Vec<f64>,
    /// U response to lagged treatment, `N(0, 0.5²)`.
    pub lambda_: Vec<f64>,
    /// S response to lagged covariates, `N(0, 0.5²)`.
    pub delta: Vec<f64>,
    /// X response to lagged treatment, `N(1 − i/p, (i/p)²)`.
    pub omega: Vec<f64>,
    /// U self-lags, `N(1 − i/p, (i/p)²)`.
    pub beta: Vec<f64>,
    /// S self-lags, `N(1 − i/p, (i/p)²)`.
    pub gamma: Vec<f64>,
    pub mu_x: f64,
    pub mu_u: f64,
    pub mu_s: f64,
    pub c: f64,
    /// Number of autoregressive blocks rejected before this one.
    #[serde(default)]
    pub redraws: usize,
}

impl PanelCoefficients {
    /// All-zero coefficients of order `p`.
    pub fn zeros(p: usize) -> Self {
        Self {
            alpha: vec![0.0; p],
            lambda_: vec![0.0; p],
            delta: vec![0.0; p],
            omega: vec![0.0; p],
            beta: vec![0.0; p],
            gamma: vec![0.0; p],
            mu_x: 0.0,
            mu_u: 0.0,
            mu_s: 0.0,
            c: 0.0,
            redraws: 0,
        }
    }

    pub fn p_order(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let arrays = [
            &self.alpha,
            &self.lambda_,
            &self.delta,
            &self.omega,
            &self.beta,
            &self.gamma,
        ];
        if arrays.iter().any(|a| a.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient arrays must have length p_order = {p}"
            )));
        }
        let scalars = [self.mu_x, self.mu_u, self.mu_s, self.c];
        if arrays.iter().flat_map(|a| a.iter()).chain(&scalars).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("panel coefficients".into()));
        }
        Ok(())
    }

    /// Whether the self-recursions of X, U and S are all stable.
    pub fn is_stationary(&self) -> bool {
        [&self.alpha, &self.beta, &self.gamma].iter().all(|a| recursion_is_stable(a))
    }
}

/// Stability of `z_t = (1/p) Σ_i a_i z_{t−i}`: every root of
/// `z^p − Σ_i (a_i/p) z^{p−i}` lies strictly inside the unit circle.
///
/// Uses the Schur–Cohn step-down recursion on the reflection coefficients.
pub fn recursion_is_stable(a: &[f64]) -> bool {
    let p = a.len();
    if p == 0 {
        return true;
    }
    // 1 + c_1 z^-1 + … + c_p z^-p
    let mut c: Vec<f64> = a.iter().map(|ai| -ai / p as f64).collect();
    for m in (1..=p).rev() {
        let k = c[m - 1];
        if !(k.abs() < 1.0) {
            return false;
        }
        let denom = 1.0 - k * k;
        let prev = c.clone();
        for i in 1..m {
            c[i - 1] = (prev[i - 1] - k * prev[m - i - 1]) / denom;
        }
    }
    true
}

/// Draws one replicate's coefficients.
///
/// Order of draws from `rng`: `alpha, lambda_, delta, omega, beta, gamma`
/// (each `p` values), then `mu_x, mu_u, mu_s, c`. With `config.stationary`
/// the six arrays are redrawn as a block until `alpha`, `beta` and `gamma`
/// define stable recursions.
pub fn draw_coefficients(config: &SimConfig, rng: &mut RngStream) -> Result<PanelCoefficients> {
    config.validate()?;
    let p = config.p_order;
    let pf = p as f64;
    let mut redraws = 0;
    loop {
        let mut draw = |mean: &dyn Fn(usize) -> f64, sd: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (1..=p).map(|i| rng.normal(mean(i), sd(i))).collect()
        };
        let zero = |_: usize| 0.0;
        let half = |_: usize| 0.5;
        let shrinking_mean = |i: usize| 1.0 - i as f64 / pf;
        let growing_sd = |i: usize| i as f64 / pf;

        let alpha = draw(&zero, &half);
        let lambda_ = draw(&zero, &half);
        let delta = draw(&zero, &half);
        let omega = draw(&shrinking_mean, &growing_sd);
        let beta = draw(&shrinking_mean, &growing_sd);
        let gamma = draw(&shrinking_mean, &growing_sd);

        let mut coef = PanelCoefficients {
            alpha,
            lambda_,
            delta,
            omega,
            beta,
            gamma,
            mu_x: 0.0,
            mu_u: 0.0,
            mu_s: 0.0,
            c: 0.0,
            redraws,
        };
        if config.stationary && !coef.is_stationary() {
            redraws += 1;
            if redraws >= MAX_REDRAWS {
                return Err(Error::InvalidConfig(format!(
                    "no stationary coefficient draw after {MAX_REDRAWS} attempts"
                )));
            }
            continue;
        }
        coef.mu_x = rng.normal(0.0, 1.0);
        coef.mu_u = rng.normal(0.0, 1.0);
        coef.mu_s = rng.normal(0.0, 1.0);
        coef.c = rng.normal(0.0, 1.0);
        return Ok(coef);
    }
}
