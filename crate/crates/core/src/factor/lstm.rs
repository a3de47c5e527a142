//! Batched forward pass and backpropagation through time for the recurrent
//! factor model.
//!
//! Step 0 starts from the trainable state `ψ = (ψ_h, ψ_c)` and reads no
//! covariates. Step `t ≥ 1` runs one LSTM cell on the previous state and the
//! input of step `t − 1`. At every step the (optionally dropped-out) hidden
//! state is mapped to the latent `L_t`, and each covariate `j` is emitted as
//! `N(g_j(L_t), σ_j²)` with an affine `g_j`.

use super::params::{FactorDims, FactorParams, ParamTensors};
use crate::numkit::gemm;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Time-major inputs and targets for a set of individuals.
pub(crate) struct Batch {
    pub b: usize,
    pub steps: usize,
    pub input_dim: usize,
    /// `[t][b][k]` standardized covariates, the emission targets.
    pub targets: Vec<f64>,
    /// `[t][b][input_dim]`; row `t` holds the input consumed at step `t`
    /// (covariates, and optionally treatment, of step `t − 1`). Row 0 is unused.
    pub inputs: Vec<f64>,
}

impl Batch {
    /// `std_x[i]` is the standardized `[t][k]` history of individual `i`;
    /// `treat[i]` its `[t]` treatments, read only when `dims.treatment_input`.
    pub fn gather(
        dims: &FactorDims,
        steps: usize,
        rows: &[usize],
        std_x: &[Vec<f64>],
        treat: Option<&[Vec<f64>]>,
    ) -> Batch {
        let (b, k, inp) = (rows.len(), dims.k, dims.input_dim());
        let mut targets = vec![0.0; steps * b * k];
        let mut inputs = vec![0.0; steps * b * inp];
        for (bi, &i) in rows.iter().enumerate() {
            let hist = &std_x[i];
            for t in 0..steps {
                targets[(t * b + bi) * k..(t * b + bi + 1) * k].copy_from_slice(&hist[t * k..(t + 1) * k]);
                if t + 1 < steps {
                    let row = &mut inputs[((t + 1) * b + bi) * inp..((t + 1) * b + bi + 1) * inp];
                    row[..k].copy_from_slice(&hist[t * k..(t + 1) * k]);
                    if dims.treatment_input {
                        row[k] = treat.map_or(0.0, |w| w[i][t]);
                    }
                }
            }
        }
        Batch { b, steps, input_dim: inp, targets, inputs }
    }
}

/// Forward caches needed by the backward pass.
pub(crate) struct Tape {
    b: usize,
    steps: usize,
    /// `[t][b][4H]` post-activation gates.
    gates: Vec<f64>,
    /// `[t][b][H]`
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    /// Dropout multipliers `[t][b][H]`, if any.
    mask: Option<Vec<f64>>,
    /// `h ⊙ mask`
    head_in: Vec<f64>,
    /// `[t][b][F]`
    fc_act: Vec<f64>,
    /// `[t][b][d_L]`
    pub latent: Vec<f64>,
    /// `[t][b][k]`
    pub mean: Vec<f64>,
    /// Mean over the batch of the summed negative log-likelihood.
    pub loss: f64,
}

fn sigmoid(x: f64) -> f64 {
    crate::numkit::sigmoid(x)
}

/// Forward pass. `mask`, when given, multiplies the hidden state fed to the
/// latent map (`[t][b][H]`).
pub(crate) fn forward(params: &FactorParams, batch: &Batch, mask: Option<Vec<f64>>) -> Tape {
    let d = &params.dims;
    let p = &params.tensors;
    let (b, steps, h, inp) = (batch.b, batch.steps, d.hidden, batch.input_dim);
    let (dl, k) = (d.latent_dim, d.k);
    let g4 = 4 * h;

    let mut gates = vec![0.0; steps * b * g4];
    let mut c = vec![0.0; steps * b * h];
    let mut tanh_c = vec![0.0; steps * b * h];
    let mut hs = vec![0.0; steps * b * h];

    for t in 0..steps {
        let (done, rest) = hs.split_at_mut(t * b * h);
        let h_t = &mut rest[..b * h];
        if t == 0 {
            for bi in 0..b {
                h_t[bi * h..(bi + 1) * h].copy_from_slice(&p.psi_h);
                c[bi * h..(bi + 1) * h].copy_from_slice(&p.psi_c);
            }
            for (tc, cv) in tanh_c[..b * h].iter_mut().zip(&c[..b * h]) {
                *tc = cv.tanh();
            }
            continue;
        }
        let h_prev = &done[(t - 1) * b * h..];
        let pre = &mut gates[t * b * g4..(t + 1) * b * g4];
        for row in pre.chunks_exact_mut(g4) {
            row.copy_from_slice(&p.gate_bias);
        }
        let x_t = &batch.inputs[t * b * inp..(t + 1) * b * inp];
        gemm(b, inp, g4, 1.0, x_t, false, &p.w_input, true, 1.0, pre);
        gemm(b, h, g4, 1.0, h_prev, false, &p.w_recurrent, true, 1.0, pre);

        let (c_done, c_rest) = c.split_at_mut(t * b * h);
        let c_prev = &c_done[(t - 1) * b * h..];
        let c_t = &mut c_rest[..b * h];
        let tc_t = &mut tanh_c[t * b * h..(t + 1) * b * h];
        for bi in 0..b {
            let g = &mut pre[bi * g4..(bi + 1) * g4];
            for u in 0..h {
                let ig = sigmoid(g[u]);
                let fg = sigmoid(g[h + u]);
                let og = sigmoid(g[2 * h + u]);
                let cg = g[3 * h + u].tanh();
                g[u] = ig;
                g[h + u] = fg;
                g[2 * h + u] = og;
                g[3 * h + u] = cg;
                let cv = fg * c_prev[bi * h + u] + ig * cg;
                let tcv = cv.tanh();
                c_t[bi * h + u] = cv;
                tc_t[bi * h + u] = tcv;
                h_t[bi * h + u] = og * tcv;
            }
        }
    }

    let head_in = match &mask {
        Some(m) => hs.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => hs.clone(),
    };

    let rows = steps * b;
    let fc_act = match d.fc_hidden {
        Some(f) => {
            let mut a = vec![0.0; rows * f];
            for row in a.chunks_exact_mut(f) {
                row.copy_from_slice(&p.fc_b);
            }
            gemm(rows, h, f, 1.0, &head_in, false, &p.fc_w, true, 1.0, &mut a);
            a.iter_mut().for_each(|v| *v = v.tanh());
            a
        }
        None => Vec::new(),
    };
    let head_src: &[f64] = if d.fc_hidden.is_some() { &fc_act } else { &head_in };
    let hi = d.head_in();

    let mut latent = vec![0.0; rows * dl];
    for row in latent.chunks_exact_mut(dl) {
        row.copy_from_slice(&p.latent_b);
    }
    gemm(rows, hi, dl, 1.0, head_src, false, &p.latent_w, true, 1.0, &mut latent);

    let mut mean = vec![0.0; rows * k];
    for row in mean.chunks_exact_mut(k) {
        row.copy_from_slice(&p.emission_b);
    }
    gemm(rows, dl, k, 1.0, &latent, false, &p.emission_w, true, 1.0, &mut mean);

    let inv_var: Vec<f64> = p.log_sigma.iter().map(|l| (-2.0 * l).exp()).collect();
    let log_sigma_sum: f64 = p.log_sigma.iter().sum();
    let mut sq = 0.0;
    for (m, x) in mean.chunks_exact(k).zip(batch.targets.chunks_exact(k)) {
        for j in 0..k {
            let res = x[j] - m[j];
            sq += 0.5 * res * res * inv_var[j];
        }
    }
    let per_individual_const = steps as f64 * (log_sigma_sum + k as f64 * HALF_LOG_2PI);
    let loss = if b == 0 { f64::NAN } else { sq / b as f64 + per_individual_const };

    Tape {
        b,
        steps,
        gates,
        c,
        tanh_c,
        h: hs,
        mask,
        head_in,
        fc_act,
        latent,
        mean,
        loss,
    }
}

/// Exact gradient of `tape.loss` with respect to every tensor.
pub(crate) fn backward(params: &FactorParams, batch: &Batch, tape: &Tape) -> ParamTensors {
    let d = &params.dims;
    let p = &params.tensors;
    let (b, steps, h, inp) = (tape.b, tape.steps, d.hidden, batch.input_dim);
    let (dl, k) = (d.latent_dim, d.k);
    let g4 = 4 * h;
    let rows = steps * b;
    let inv_b = 1.0 / b as f64;
    let mut g = ParamTensors::zeros(d);

    // Emission layer.
    let inv_var: Vec<f64> = p.log_sigma.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut d_mean = vec![0.0; rows * k];
    for j in 0..k {
        g.log_sigma[j] = steps as f64;
    }
    for ((dm, m), x) in d_mean
        .chunks_exact_mut(k)
        .zip(tape.mean.chunks_exact(k))
        .zip(batch.targets.chunks_exact(k))
    {
        for j in 0..k {
            let res = x[j] - m[j];
            dm[j] = -res * inv_var[j] * inv_b;
            g.log_sigma[j] -= res * res * inv_var[j] * inv_b;
        }
    }
    gemm(k, rows, dl, 1.0, &d_mean, true, &tape.latent, false, 0.0, &mut g.emission_w);
    column_sums(&d_mean, k, &mut g.emission_b);

    let mut d_latent = vec![0.0; rows * dl];
    gemm(rows, k, dl, 1.0, &d_mean, false, &p.emission_w, false, 0.0, &mut d_latent);
    let hi = d.head_in();
    let head_src: &[f64] = if d.fc_hidden.is_some() { &tape.fc_act } else { &tape.head_in };
    gemm(dl, rows, hi, 1.0, &d_latent, true, head_src, false, 0.0, &mut g.latent_w);
    column_sums(&d_latent, dl, &mut g.latent_b);

    let mut d_head_src = vec![0.0; rows * hi];
    gemm(rows, dl, hi, 1.0, &d_latent, false, &p.latent_w, false, 0.0, &mut d_head_src);

    let mut d_head_in = match d.fc_hidden {
        Some(f) => {
            for (dv, a) in d_head_src.iter_mut().zip(&tape.fc_act) {
                *dv *= 1.0 - a * a;
            }
            gemm(f, rows, h, 1.0, &d_head_src, true, &tape.head_in, false, 0.0, &mut g.fc_w);
            column_sums(&d_head_src, f, &mut g.fc_b);
            let mut dh = vec![0.0; rows * h];
            gemm(rows, f, h, 1.0, &d_head_src, false, &p.fc_w, false, 0.0, &mut dh);
            dh
        }
        None => d_head_src,
    };
    if let Some(m) = &tape.mask {
        for (dv, mv) in d_head_in.iter_mut().zip(m) {
            *dv *= mv;
        }
    }

    // Backpropagation through time.
    let mut dh_carry = vec![0.0; b * h];
    let mut dc_carry = vec![0.0; b * h];
    let mut d_pre = vec![0.0; b * g4];
    for t in (1..steps).rev() {
        let gates = &tape.gates[t * b * g4..(t + 1) * b * g4];
        let tc = &tape.tanh_c[t * b * h..(t + 1) * b * h];
        let c_prev = &tape.c[(t - 1) * b * h..t * b * h];
        let dh_head = &d_head_in[t * b * h..(t + 1) * b * h];
        for bi in 0..b {
            let gt = &gates[bi * g4..(bi + 1) * g4];
            let dp = &mut d_pre[bi * g4..(bi + 1) * g4];
            for u in 0..h {
                let idx = bi * h + u;
                let (ig, fg, og, cg) = (gt[u], gt[h + u], gt[2 * h + u], gt[3 * h + u]);
                let dh = dh_head[idx] + dh_carry[idx];
                let tcv = tc[idx];
                let dc = dc_carry[idx] + dh * og * (1.0 - tcv * tcv);
                dp[u] = dc * cg * ig * (1.0 - ig);
                dp[h + u] = dc * c_prev[idx] * fg * (1.0 - fg);
                dp[2 * h + u] = dh * tcv * og * (1.0 - og);
                dp[3 * h + u] = dc * ig * (1.0 - cg * cg);
                dc_carry[idx] = dc * fg;
            }
        }
        let x_t = &batch.inputs[t * b * inp..(t + 1) * b * inp];
        let h_prev = &tape.h[(t - 1) * b * h..t * b * h];
        gemm(g4, b, inp, 1.0, &d_pre, true, x_t, false, 1.0, &mut g.w_input);
        gemm(g4, b, h, 1.0, &d_pre, true, h_prev, false, 1.0, &mut g.w_recurrent);
        column_sums_acc(&d_pre, g4, &mut g.gate_bias);
        gemm(b, g4, h, 1.0, &d_pre, false, &p.w_recurrent, false, 0.0, &mut dh_carry);
    }
    if steps > 0 {
        let dh_head = &d_head_in[..b * h];
        for bi in 0..b {
            for u in 0..h {
                let idx = bi * h + u;
                g.psi_h[u] += dh_head[idx] + dh_carry[idx];
                g.psi_c[u] += dc_carry[idx];
            }
        }
    }
    g
}

fn column_sums(m: &[f64], cols: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    column_sums_acc(m, cols, out);
}

fn column_sums_acc(m: &[f64], cols: usize, out: &mut [f64]) {
    for row in m.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
