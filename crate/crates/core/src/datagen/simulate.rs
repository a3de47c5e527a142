use serde::{Deserialize, Serialize};

use super::{draw_coefficients, PanelCoefficients, SimConfig};
use crate::error::Result;
use crate::numkit::{sigmoid, RngStream};
use crate::panel::TrajectoryPanel;

/// An observed panel plus the hidden quantities that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanel {
    pub config: SimConfig,
    pub replicate: u64,
    pub observed: TrajectoryPanel,
    /// `[n][t][dim_u]`
    pub latent_u: Vec<f64>,
    /// `[n][t]`
    pub latent_s: Vec<f64>,
    /// Per-step effect of `W_t` on the next outcome; equals `rho_w` at every step.
    pub true_effect: f64,
    pub coefficients: PanelCoefficients,
}

impl SyntheticPanel {
    /// Hidden instrument `S` at 0-based step `t`, one value per individual.
    pub fn latent_s_column(&self, t: usize) -> Vec<f64> {
        let steps = self.observed.t_steps();
        (0..self.observed.n()).map(|i| self.latent_s[i * steps + t]).collect()
    }

    /// Sum of the hidden confounder components at 0-based step `t`.
    pub fn latent_u_sum_column(&self, t: usize) -> Vec<f64> {
        let steps = self.observed.t_steps();
        let du = self.config.dim_u;
        (0..self.observed.n())
            .map(|i| {
                let start = (i * steps + t) * du;
                self.latent_u[start..start + du].iter().sum()
            })
            .collect()
    }
}

/// The random stream of replicate `replicate` under `master_seed`.
pub fn replicate_seed(master_seed: u64, replicate: u64) -> RngStream {
    RngStream::new(master_seed, replicate)
}

/// Generates replicate `replicate`: coefficients first, then the panel, from
/// the replicate's own stream.
pub fn simulate_panel(config: &SimConfig, replicate: u64) -> Result<SyntheticPanel> {
    config.validate()?;
    let mut rng = replicate_seed(config.master_seed, replicate);
    let coefficients = draw_coefficients(config, &mut rng)?;
    simulate_with_coefficients(config, coefficients, &mut rng, replicate)
}

/// Runs the time recursion with fixed coefficients.
///
/// For each individual and step (0-based `t`, lags `i = 1..=p`):
///
/// ```text
/// X_t = (1/p) Σ_i (α_i X_{t−i} + ω_i W_{t−i}) + ε_X
/// U_t = (1/p) Σ_i (β_i U_{t−i} + λ_i W_{t−i}) + ε_U
/// S_t = (1/p) Σ_i (γ_i S_{t−i} + δ_i ΣX_{t−i}) + ε_S
/// θ_t = μ_X ΣX̂_t + μ_U ΣÛ_t + μ_S Ŝ_t      (hats: sums over the last min(p, t+1) steps)
/// W_t ~ Bernoulli(sigmoid(c θ_t))
/// Y_t = ρ_W W_t + ρ_X ΣX_t + ρ_U ΣU_t (+ optional outcome noise)
/// ```
///
/// Lags before the first step read the pre-sample state: `X, U, S` drawn
/// `N(0, initial_sd²)` and `W = 0`.
pub fn simulate_with_coefficients(
    config: &SimConfig,
    coefficients: PanelCoefficients,
    rng: &mut RngStream,
    replicate: u64,
) -> Result<SyntheticPanel> {
    config.validate()?;
    let p = config.p_order;
    coefficients.validate(p)?;
    let (n, steps, dx, du) = (config.n_individuals, config.t_steps, config.dim_x, config.dim_u);
    let pf = p as f64;
    let co = &coefficients;

    let mut cov = Vec::with_capacity(n * steps * dx);
    let mut treat = Vec::with_capacity(n * steps);
    let mut outcome = Vec::with_capacity(n * steps);
    let mut lat_u = Vec::with_capacity(n * steps * du);
    let mut lat_s = Vec::with_capacity(n * steps);

    // History buffers: slot `p + t` holds step t; slots 0..p are pre-sample.
    let len = p + steps;
    let mut xh = vec![0.0; len * dx];
    let mut uh = vec![0.0; len * du];
    let mut sh = vec![0.0; len];
    let mut wh = vec![0.0; len];

    for _ in 0..n {
        xh.fill(0.0);
        uh.fill(0.0);
        sh.fill(0.0);
        wh.fill(0.0);
        for slot in 0..p {
            for j in 0..dx {
                xh[slot * dx + j] = rng.normal(0.0, config.initial_sd);
            }
            for j in 0..du {
                uh[slot * du + j] = rng.normal(0.0, config.initial_sd);
            }
            sh[slot] = rng.normal(0.0, config.initial_sd);
        }

        for t in 0..steps {
            let now = p + t;
            for j in 0..dx {
                let mut acc = 0.0;
                for i in 1..=p {
                    acc += co.alpha[i - 1] * xh[(now - i) * dx + j] + co.omega[i - 1] * wh[now - i];
                }
                xh[now * dx + j] = acc / pf + rng.normal(0.0, config.noise_sd);
            }
            for j in 0..du {
                let mut acc = 0.0;
                for i in 1..=p {
                    acc += co.beta[i - 1] * uh[(now - i) * du + j] + co.lambda_[i - 1] * wh[now - i];
                }
                uh[now * du + j] = acc / pf + rng.normal(0.0, config.noise_sd);
            }
            let mut acc = 0.0;
            for i in 1..=p {
                let x_sum: f64 = xh[(now - i) * dx..(now - i + 1) * dx].iter().sum();
                acc += co.gamma[i - 1] * sh[now - i] + co.delta[i - 1] * x_sum;
            }
            sh[now] = acc / pf + rng.normal(0.0, config.noise_sd);

            let window = (t + 1).min(p);
            let mut x_hat = 0.0;
            let mut u_hat = 0.0;
            let mut s_hat = 0.0;
            for slot in now + 1 - window..=now {
                x_hat += xh[slot * dx..(slot + 1) * dx].iter().sum::<f64>();
                u_hat += uh[slot * du..(slot + 1) * du].iter().sum::<f64>();
                s_hat += sh[slot];
            }
            let theta = co.mu_x * x_hat + co.mu_u * u_hat + co.mu_s * s_hat;
            let w = if rng.bernoulli(sigmoid(co.c * theta)) { 1.0 } else { 0.0 };
            wh[now] = w;

            let x_now: f64 = xh[now * dx..(now + 1) * dx].iter().sum();
            let u_now: f64 = uh[now * du..(now + 1) * du].iter().sum();
            let noise = rng.normal(0.0, config.outcome_noise_sd);
            outcome.push(config.rho_w * w + config.rho_x * x_now + config.rho_u * u_now + noise);
            treat.push(w);
        }
        cov.extend_from_slice(&xh[p * dx..]);
        lat_u.extend_from_slice(&uh[p * du..]);
        lat_s.extend_from_slice(&sh[p..]);
    }

    let observed = TrajectoryPanel::new(n, steps, dx, cov, treat, outcome)?;
    Ok(SyntheticPanel {
        config: config.clone(),
        replicate,
        observed,
        latent_u: lat_u,
        latent_s: lat_s,
        true_effect: config.rho_w,
        coefficients,
    })
}
