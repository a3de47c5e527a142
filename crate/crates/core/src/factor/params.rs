use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::RngStream;
use crate::panel::TrajectoryPanel;

/// Training hyper-parameters. Defaults follow the reference settings
/// (100 epochs, batches of 128, 128 recurrent and 128 dense units, keep 0.8).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    /// Probability of keeping a hidden unit under dropout, in (0, 1].
    pub keep_probability: f64,
    pub latent_dim: usize,
    pub seed: u64,
    /// Width of the dense layer between the recurrent state and the latent.
    /// `None` maps the state to the latent with a single affine layer.
    pub fc_hidden: Option<usize>,
    /// Append `W_{t−1}` to the recurrent input alongside `X_{t−1}`.
    pub treatment_input: bool,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    /// Allow panels smaller than one batch (the batch shrinks to the panel).
    pub clip_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            hidden_units: 128,
            learning_rate: 1e-3,
            keep_probability: 0.8,
            latent_dim: 1,
            seed: 0,
            fc_hidden: Some(128),
            treatment_input: false,
            grad_clip: 5.0,
            clip_batch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.hidden_units == 0 {
            return fail("hidden_units must be >= 1");
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be >= 1");
        }
        if self.fc_hidden == Some(0) {
            return fail("fc_hidden must be >= 1 when set");
        }
        if !(self.keep_probability > 0.0 && self.keep_probability <= 1.0) {
            return fail("keep_probability must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip must be positive");
        }
        Ok(())
    }
}

/// Shape of a factor model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorDims {
    /// Number of covariates (emission heads).
    pub k: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    pub fc_hidden: Option<usize>,
    pub treatment_input: bool,
}

impl FactorDims {
    pub fn input_dim(&self) -> usize {
        self.k + usize::from(self.treatment_input)
    }

    /// Width of the layer feeding the latent map.
    pub fn head_in(&self) -> usize {
        self.fc_hidden.unwrap_or(self.hidden)
    }
}

/// Per-covariate z-score transform fitted on the training panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(k: usize) -> Self {
        Self { mean: vec![0.0; k], scale: vec![1.0; k] }
    }

    pub fn fit(panel: &TrajectoryPanel) -> Self {
        let k = panel.k();
        let count = (panel.n() * panel.t_steps()) as f64;
        let mut mean = vec![0.0; k];
        for row in panel.covariates().chunks_exact(k) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; k];
        for row in panel.covariates().chunks_exact(k) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / count).sqrt();
                if sd > 1e-12 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    /// Standardized covariate history of individual `i`, `[t][k]`.
    pub fn apply(&self, panel: &TrajectoryPanel, i: usize) -> Vec<f64> {
        let k = panel.k();
        panel
            .x_history(i)
            .iter()
            .enumerate()
            .map(|(idx, v)| (v - self.mean[idx % k]) / self.scale[idx % k])
            .collect()
    }
}

/// Every trainable tensor, row-major. Gate blocks are stacked in the order
/// input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensors {
    /// `4H x input_dim`
    pub w_input: Vec<f64>,
    /// `4H x H`
    pub w_recurrent: Vec<f64>,
    /// `4H`
    pub gate_bias: Vec<f64>,
    /// Initial hidden state `ψ_h`, `H`.
    pub psi_h: Vec<f64>,
    /// Initial cell state `ψ_c`, `H`.
    pub psi_c: Vec<f64>,
    /// `F x H` (empty without a dense layer)
    pub fc_w: Vec<f64>,
    /// `F`
    pub fc_b: Vec<f64>,
    /// `d_L x head_in`
    pub latent_w: Vec<f64>,
    /// `d_L`
    pub latent_b: Vec<f64>,
    /// `k x d_L`
    pub emission_w: Vec<f64>,
    /// `k`
    pub emission_b: Vec<f64>,
    /// `log σ_j`, `k`
    pub log_sigma: Vec<f64>,
}

pub(crate) const TENSOR_NAMES: [&str; 12] = [
    "w_input",
    "w_recurrent",
    "gate_bias",
    "psi_h",
    "psi_c",
    "fc_w",
    "fc_b",
    "latent_w",
    "latent_b",
    "emission_w",
    "emission_b",
    "log_sigma",
];

impl ParamTensors {
    pub fn zeros(d: &FactorDims) -> Self {
        let (h, f) = (d.hidden, d.fc_hidden.unwrap_or(0));
        Self {
            w_input: vec![0.0; 4 * h * d.input_dim()],
            w_recurrent: vec![0.0; 4 * h * h],
            gate_bias: vec![0.0; 4 * h],
            psi_h: vec![0.0; h],
            psi_c: vec![0.0; h],
            fc_w: vec![0.0; f * h],
            fc_b: vec![0.0; f],
            latent_w: vec![0.0; d.latent_dim * d.head_in()],
            latent_b: vec![0.0; d.latent_dim],
            emission_w: vec![0.0; d.k * d.latent_dim],
            emission_b: vec![0.0; d.k],
            log_sigma: vec![0.0; d.k],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 12] {
        [
            (TENSOR_NAMES[0], &self.w_input),
            (TENSOR_NAMES[1], &self.w_recurrent),
            (TENSOR_NAMES[2], &self.gate_bias),
            (TENSOR_NAMES[3], &self.psi_h),
            (TENSOR_NAMES[4], &self.psi_c),
            (TENSOR_NAMES[5], &self.fc_w),
            (TENSOR_NAMES[6], &self.fc_b),
            (TENSOR_NAMES[7], &self.latent_w),
            (TENSOR_NAMES[8], &self.latent_b),
            (TENSOR_NAMES[9], &self.emission_w),
            (TENSOR_NAMES[10], &self.emission_b),
            (TENSOR_NAMES[11], &self.log_sigma),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 12] {
        [
            (TENSOR_NAMES[0], &mut self.w_input),
            (TENSOR_NAMES[1], &mut self.w_recurrent),
            (TENSOR_NAMES[2], &mut self.gate_bias),
            (TENSOR_NAMES[3], &mut self.psi_h),
            (TENSOR_NAMES[4], &mut self.psi_c),
            (TENSOR_NAMES[5], &mut self.fc_w),
            (TENSOR_NAMES[6], &mut self.fc_b),
            (TENSOR_NAMES[7], &mut self.latent_w),
            (TENSOR_NAMES[8], &mut self.latent_b),
            (TENSOR_NAMES[9], &mut self.emission_w),
            (TENSOR_NAMES[10], &mut self.emission_b),
            (TENSOR_NAMES[11], &mut self.log_sigma),
        ]
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| *n)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A recurrent factor model: dimensions, covariate standardization and tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub dims: FactorDims,
    pub standardizer: Standardizer,
    pub tensors: ParamTensors,
    /// The configuration the parameters were trained with, if any.
    pub train_config: Option<TrainConfig>,
}

impl FactorParams {
    pub fn zeros(dims: FactorDims) -> Self {
        Self {
            tensors: ParamTensors::zeros(&dims),
            standardizer: Standardizer::identity(dims.k),
            dims,
            train_config: None,
        }
    }

    /// Random initialization: uniform `±1/√fan_in` weights, forget-gate bias 1,
    /// `ψ ~ N(0, 0.1²)`, unit emission scales.
    pub fn init(dims: FactorDims, standardizer: Standardizer, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(dims);
        p.standardizer = standardizer;
        let h = dims.hidden;
        let t = &mut p.tensors;
        let mut fill_uniform = |v: &mut Vec<f64>, fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            v.iter_mut().for_each(|x| *x = (2.0 * rng.uniform() - 1.0) * bound);
        };
        fill_uniform(&mut t.w_input, h);
        fill_uniform(&mut t.w_recurrent, h);
        fill_uniform(&mut t.fc_w, h);
        fill_uniform(&mut t.latent_w, dims.head_in());
        fill_uniform(&mut t.emission_w, dims.latent_dim);
        t.gate_bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        for v in t.psi_h.iter_mut().chain(t.psi_c.iter_mut()) {
            *v = rng.normal(0.0, 0.1);
        }
        p
    }

    pub fn validate_for(&self, panel: &TrajectoryPanel) -> Result<()> {
        if panel.k() != self.dims.k {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} covariates, panel has {}",
                self.dims.k,
                panel.k()
            )));
        }
        if self.dims.latent_dim == 0 || self.dims.hidden == 0 {
            return Err(Error::DimensionMismatch("empty latent or hidden dimension".into()));
        }
        let expected = ParamTensors::zeros(&self.dims);
        for ((name, have), (_, want)) in self.tensors.tensors().iter().zip(expected.tensors().iter()) {
            if have.len() != want.len() {
                return Err(Error::DimensionMismatch(format!(
                    "tensor `{name}` has {} values, expected {}",
                    have.len(),
                    want.len()
                )));
            }
        }
        if self.standardizer.mean.len() != self.dims.k || self.standardizer.scale.len() != self.dims.k {
            return Err(Error::DimensionMismatch("standardizer length".into()));
        }
        if let Some(name) = self.tensors.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter tensor `{name}`")));
        }
        Ok(())
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.tensors.log_sigma.iter().map(|l| l.exp()).collect()
    }

    /// Content hash over dimensions, standardization and tensor bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let d = &self.dims;
        for v in [d.k, d.hidden, d.latent_dim, d.fc_hidden.unwrap_or(0), usize::from(d.treatment_input)] {
            h.update((v as u64).to_le_bytes());
        }
        let std = self.standardizer.mean.iter().chain(&self.standardizer.scale);
        for v in std.chain(self.tensors.tensors().iter().flat_map(|(_, t)| t.iter())) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}
