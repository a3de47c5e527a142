//! Recurrent factor model that learns a substitute instrument `L_t` from the
//! covariate history.
//!
//! The model is fitted by maximum likelihood of a factorized Gaussian
//! emission: given `L_t`, the covariates `x_t1 … x_tk` are independent with
//! `x_tj ~ N(g_j(L_t), σ_j²)`. `L_t` itself is a deterministic function of
//! `X_1 … X_{t−1}` computed by an LSTM started from a trainable state `ψ`.
//! Covariates are z-scored with statistics of the training panel; the
//! transform is part of the parameters and is reapplied at inference.

mod lstm;
mod optim;
mod params;

use std::path::Path;

use log::debug;
use serde::{Deserialize, Serialize};

pub use params::{FactorDims, FactorParams, ParamTensors, Standardizer, TrainConfig};

use crate::error::{Error, Result};
use crate::numkit::RngStream;
use crate::panel::TrajectoryPanel;
use lstm::{backward, forward, Batch};
use optim::{clip_global_norm, Adam};

/// Individuals per chunk when evaluating over a whole panel.
const EVAL_CHUNK: usize = 512;

/// Output of a single-individual forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// `[t][d_L]`
    pub latents: Vec<f64>,
    /// Emission means `[t][k]`, in standardized covariate units.
    pub predicted_means: Vec<f64>,
}

/// Inferred substitute instrument for every individual and step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPanel {
    pub n: usize,
    pub t_steps: usize,
    pub latent_dim: usize,
    /// `[n][t][d_L]`
    pub latents: Vec<f64>,
    pub source_fingerprint: String,
}

impl LatentPanel {
    /// Wraps externally supplied instrument values, e.g. a known instrument.
    pub fn from_values(
        n: usize,
        t_steps: usize,
        latent_dim: usize,
        latents: Vec<f64>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if latents.len() != n * t_steps * latent_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} latent values for n={n}, t={t_steps}, d={latent_dim}",
                latents.len()
            )));
        }
        if latents.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent values".into()));
        }
        Ok(Self { n, t_steps, latent_dim, latents, source_fingerprint: source.into() })
    }

    /// Latent dimension `d` at 0-based step `t`, one value per individual.
    pub fn column(&self, t: usize, d: usize) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.latents[(i * self.t_steps + t) * self.latent_dim + d])
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> LatentPanel {
        LatentPanel {
            latents: self.latents.iter().map(|v| v * factor).collect(),
            source_fingerprint: format!("{}*{factor}", self.source_fingerprint),
            ..self.clone()
        }
    }

    pub fn select_individuals(&self, rows: &[usize]) -> LatentPanel {
        let stride = self.t_steps * self.latent_dim;
        let mut latents = Vec::with_capacity(rows.len() * stride);
        for &i in rows {
            latents.extend_from_slice(&self.latents[i * stride..(i + 1) * stride]);
        }
        LatentPanel { n: rows.len(), latents, ..self.clone() }
    }

    pub fn matches(&self, panel: &TrajectoryPanel) -> bool {
        self.n == panel.n() && self.t_steps == panel.t_steps()
    }
}

/// Loss trajectory of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    /// Full-panel loss of the initial parameters, without dropout.
    pub initial_loss: f64,
    /// Mean mini-batch loss per epoch, with dropout active.
    pub epoch_losses: Vec<f64>,
    /// Full-panel loss of the final parameters, without dropout.
    pub final_loss: f64,
}

fn standardized(params: &FactorParams, panel: &TrajectoryPanel, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&i| params.standardizer.apply(panel, i)).collect()
}

fn treatments(panel: &TrajectoryPanel, rows: &[usize]) -> Vec<Vec<f64>> {
    let steps = panel.t_steps();
    rows.iter().map(|&i| panel.treatments()[i * steps..(i + 1) * steps].to_vec()).collect()
}

/// Batch over `rows` of `panel`, standardizing on the fly.
fn local_batch(params: &FactorParams, panel: &TrajectoryPanel, rows: &[usize]) -> Batch {
    let std_x = standardized(params, panel, rows);
    let treat = params.dims.treatment_input.then(|| treatments(panel, rows));
    let local: Vec<usize> = (0..rows.len()).collect();
    Batch::gather(&params.dims, panel.t_steps(), &local, &std_x, treat.as_deref())
}

fn check_rows(panel: &TrajectoryPanel, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= panel.n()) {
        return Err(Error::DimensionMismatch(format!(
            "individual {bad} out of range for a panel of {}",
            panel.n()
        )));
    }
    Ok(())
}

/// Latents and emission means for one individual; no dropout.
pub fn forward_individual(
    params: &FactorParams,
    panel: &TrajectoryPanel,
    individual: usize,
) -> Result<ForwardOutput> {
    params.validate_for(panel)?;
    check_rows(panel, &[individual])?;
    let tape = forward(params, &local_batch(params, panel, &[individual]), None);
    Ok(ForwardOutput { latents: tape.latent, predicted_means: tape.mean })
}

/// Mean over `individuals` of `Σ_t Σ_j [log σ_j + (x_tj − g_j(L_t))²/(2σ_j²) + ½ log 2π]`,
/// on standardized covariates.
pub fn negative_log_likelihood(
    params: &FactorParams,
    panel: &TrajectoryPanel,
    individuals: &[usize],
) -> Result<f64> {
    params.validate_for(panel)?;
    check_rows(panel, individuals)?;
    let loss = forward(params, &local_batch(params, panel, individuals), None).loss;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0, value: loss });
    }
    Ok(loss)
}

/// Analytic gradient of [`negative_log_likelihood`] by backpropagation through time.
pub fn gradients(
    params: &FactorParams,
    panel: &TrajectoryPanel,
    individuals: &[usize],
) -> Result<ParamTensors> {
    params.validate_for(panel)?;
    check_rows(panel, individuals)?;
    let batch = local_batch(params, panel, individuals);
    let tape = forward(params, &batch, None);
    if !tape.loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0, value: tape.loss });
    }
    let g = backward(params, &batch, &tape);
    if let Some(name) = g.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok(g)
}

fn full_panel_loss(params: &FactorParams, panel: &TrajectoryPanel, std_x: &[Vec<f64>], treat: Option<&[Vec<f64>]>) -> f64 {
    let all: Vec<usize> = (0..panel.n()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(EVAL_CHUNK) {
        let batch = Batch::gather(&params.dims, panel.t_steps(), chunk, std_x, treat);
        total += forward(params, &batch, None).loss * chunk.len() as f64;
    }
    total / panel.n() as f64
}

/// Fits the factor model with mini-batch Adam.
///
/// Each epoch visits the individuals in a fresh random order, in batches of
/// `batch_size` (the last batch may be smaller). Inverted dropout with
/// `keep_probability` is applied to the hidden state fed to the latent map,
/// during training only. Gradients are clipped to a global norm of
/// `grad_clip`. Everything is deterministic given `config.seed`.
pub fn train(panel: &TrajectoryPanel, config: &TrainConfig) -> Result<(FactorParams, TrainingCurve)> {
    config.validate()?;
    let n = panel.n();
    if n == 0 || panel.t_steps() == 0 {
        return Err(Error::InvalidConfig("cannot train on an empty panel".into()));
    }
    if n < config.batch_size && !config.clip_batch {
        return Err(Error::InvalidConfig(format!(
            "panel has {n} individuals, fewer than batch_size {}",
            config.batch_size
        )));
    }
    let dims = FactorDims {
        k: panel.k(),
        hidden: config.hidden_units,
        latent_dim: config.latent_dim,
        fc_hidden: config.fc_hidden,
        treatment_input: config.treatment_input,
    };
    let root = RngStream::new(config.seed, 0x7469_666d);
    let mut init_rng = root.child(0);
    let mut order_rng = root.child(1);
    let mut drop_rng = root.child(2);

    let mut params = FactorParams::init(dims, Standardizer::fit(panel), &mut init_rng);
    params.train_config = Some(config.clone());

    let all: Vec<usize> = (0..n).collect();
    let std_x = standardized(&params, panel, &all);
    let treat = dims.treatment_input.then(|| treatments(panel, &all));
    let treat = treat.as_deref();

    let initial_loss = full_panel_loss(&params, panel, &std_x, treat);
    let mut adam = Adam::new(&dims, config.learning_rate);
    let batch_size = config.batch_size.min(n);
    let keep = config.keep_probability;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order = all.clone();

    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for (bi, rows) in order.chunks(batch_size).enumerate() {
            let batch = Batch::gather(&dims, panel.t_steps(), rows, &std_x, treat);
            let mask = (keep < 1.0).then(|| {
                (0..panel.t_steps() * rows.len() * dims.hidden)
                    .map(|_| if drop_rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                    .collect::<Vec<f64>>()
            });
            let tape = forward(&params, &batch, mask);
            if !tape.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi, value: tape.loss });
            }
            let mut grads = backward(&params, &batch, &tape);
            if let Some(name) = grads.first_non_finite() {
                return Err(Error::NonFiniteGradient(name));
            }
            clip_global_norm(&mut grads, config.grad_clip);
            adam.update(&mut params.tensors, &grads);
            total += tape.loss * rows.len() as f64;
        }
        let epoch_loss = total / n as f64;
        debug!("epoch {epoch}: loss {epoch_loss:.6}");
        epoch_losses.push(epoch_loss);
    }

    let final_loss = full_panel_loss(&params, panel, &std_x, treat);
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: config.epochs, batch: 0, value: final_loss });
    }
    Ok((params, TrainingCurve { initial_loss, epoch_losses, final_loss }))
}

/// Forward-pass latents for every individual, without dropout.
pub fn infer_latents(params: &FactorParams, panel: &TrajectoryPanel) -> Result<LatentPanel> {
    params.validate_for(panel)?;
    let (n, steps, dl) = (panel.n(), panel.t_steps(), params.dims.latent_dim);
    let mut latents = vec![0.0; n * steps * dl];
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let tape = forward(params, &local_batch(params, panel, chunk), None);
        let b = chunk.len();
        for (bi, &i) in chunk.iter().enumerate() {
            for t in 0..steps {
                let src = &tape.latent[(t * b + bi) * dl..(t * b + bi + 1) * dl];
                latents[(i * steps + t) * dl..(i * steps + t + 1) * dl].copy_from_slice(src);
            }
        }
    }
    if latents.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inferred latents".into()));
    }
    let source = format!("{}-{}", params.fingerprint(), panel.fingerprint());
    LatentPanel::from_values(n, steps, dl, latents, source)
}

const CHECKPOINT_FORMAT: &str = "tifm-factor-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    params: FactorParams,
}

/// Writes a versioned JSON checkpoint. Floats round-trip exactly.
pub fn save_checkpoint(params: &FactorParams, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        params: params.clone(),
    };
    let json = serde_json::to_string(&ck)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FactorParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    Ok(ck.params)
}

#[cfg(test)]
mod tests;
