use super::*;
use crate::datagen::{simulate_panel, SimConfig};
use crate::numkit::pearson;

fn random_panel(n: usize, steps: usize, k: usize, seed: u64) -> TrajectoryPanel {
    let mut rng = RngStream::new(seed, 11);
    let x = (0..n * steps * k).map(|_| rng.normal(0.0, 1.5)).collect();
    let w = (0..n * steps).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect();
    let y = (0..n * steps).map(|_| rng.standard_normal()).collect();
    TrajectoryPanel::new(n, steps, k, x, w, y).unwrap()
}

fn dims(k: usize, hidden: usize, fc: Option<usize>, treat: bool) -> FactorDims {
    FactorDims { k, hidden, latent_dim: 1, fc_hidden: fc, treatment_input: treat }
}

/// Random parameters with non-trivial emission scales and a fitted standardizer.
fn random_params(d: FactorDims, panel: &TrajectoryPanel, seed: u64) -> FactorParams {
    let mut rng = RngStream::new(seed, 3);
    let mut p = FactorParams::init(d, Standardizer::fit(panel), &mut rng);
    for (_, t) in p.tensors.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.normal(0.0, 0.3));
    }
    p
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight-line per-individual reimplementation of the model and its loss.
fn naive_nll(p: &FactorParams, panel: &TrajectoryPanel, rows: &[usize]) -> f64 {
    let d = p.dims;
    let t = &p.tensors;
    let (h, k, inp) = (d.hidden, d.k, d.input_dim());
    let mut total = 0.0;
    for &i in rows {
        let xs: Vec<Vec<f64>> = (0..panel.t_steps())
            .map(|s| {
                (0..k)
                    .map(|j| (panel.x(i, s)[j] - p.standardizer.mean[j]) / p.standardizer.scale[j])
                    .collect()
            })
            .collect();
        let mut hs = t.psi_h.clone();
        let mut cs = t.psi_c.clone();
        for s in 0..panel.t_steps() {
            if s > 0 {
                let mut input = xs[s - 1].clone();
                if d.treatment_input {
                    input.push(panel.w(i, s - 1));
                }
                let mut pre = vec![0.0; 4 * h];
                for r in 0..4 * h {
                    let mut acc = t.gate_bias[r];
                    for c in 0..inp {
                        acc += t.w_input[r * inp + c] * input[c];
                    }
                    for c in 0..h {
                        acc += t.w_recurrent[r * h + c] * hs[c];
                    }
                    pre[r] = acc;
                }
                for u in 0..h {
                    let c_new = sig(pre[h + u]) * cs[u] + sig(pre[u]) * pre[3 * h + u].tanh();
                    cs[u] = c_new;
                    hs[u] = sig(pre[2 * h + u]) * c_new.tanh();
                }
            }
            let head: Vec<f64> = match d.fc_hidden {
                Some(f) => (0..f)
                    .map(|r| (t.fc_b[r] + (0..h).map(|c| t.fc_w[r * h + c] * hs[c]).sum::<f64>()).tanh())
                    .collect(),
                None => hs.clone(),
            };
            let latent = t.latent_b[0] + head.iter().zip(&t.latent_w).map(|(a, b)| a * b).sum::<f64>();
            for j in 0..k {
                let mean = t.emission_b[j] + t.emission_w[j] * latent;
                let sigma = t.log_sigma[j].exp();
                let r = xs[s][j] - mean;
                total += sigma.ln() + r * r / (2.0 * sigma * sigma) + 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
        }
    }
    total / rows.len() as f64
}

#[test]
fn zero_parameters_give_constant_latents() {
    let panel = random_panel(3, 5, 2, 1);
    let params = FactorParams::zeros(dims(2, 4, Some(3), false));
    let lat = infer_latents(&params, &panel).unwrap();
    let first = lat.latents[0];
    assert!(lat.latents.iter().all(|&v| v == first));
}

#[test]
fn forward_is_deterministic_and_input_driven() {
    let mut panel = random_panel(4, 6, 2, 2);
    let params = random_params(dims(2, 5, Some(4), false), &panel, 9);
    let a = forward_individual(&params, &panel, 1).unwrap();
    let b = forward_individual(&params, &panel, 1).unwrap();
    assert_eq!(a, b);

    // Copy individual 1's history onto individual 3.
    let steps = panel.t_steps();
    let mut x = panel.covariates().to_vec();
    let src: Vec<f64> = panel.x_history(1).to_vec();
    x[3 * steps * 2..4 * steps * 2].copy_from_slice(&src);
    panel = TrajectoryPanel::new(4, steps, 2, x, panel.treatments().to_vec(), panel.outcomes().to_vec()).unwrap();
    let a = forward_individual(&params, &panel, 1).unwrap();
    let c = forward_individual(&params, &panel, 3).unwrap();
    assert_eq!(a.latents, c.latents);
}

#[test]
fn latents_depend_only_on_the_past() {
    let panel = random_panel(2, 6, 2, 3);
    let params = random_params(dims(2, 5, None, true), &panel, 4);
    let base = forward_individual(&params, &panel, 0).unwrap();
    for t in 0..6 {
        let mut x = panel.covariates().to_vec();
        let mut w = panel.treatments().to_vec();
        for s in t..6 {
            x[s * 2] += 3.0;
            x[s * 2 + 1] -= 1.0;
            w[s] = 1.0 - w[s];
        }
        let mutated = TrajectoryPanel::new(2, 6, 2, x, w, panel.outcomes().to_vec()).unwrap();
        let out = forward_individual(&params, &mutated, 0).unwrap();
        assert_eq!(out.latents[..=t], base.latents[..=t], "mutation from step {t}");
        if t + 1 < 6 {
            assert_ne!(out.latents[t + 1], base.latents[t + 1]);
        }
    }
}

#[test]
fn nll_matches_naive_evaluator() {
    for (seed, fc, treat) in [(1, None, false), (2, Some(3), false), (3, Some(4), true)] {
        let panel = random_panel(4, 3, 2, seed);
        let params = random_params(dims(2, 5, fc, treat), &panel, seed + 100);
        let rows = [0, 1, 2, 3];
        let fast = negative_log_likelihood(&params, &panel, &rows).unwrap();
        let slow = naive_nll(&params, &panel, &rows);
        assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

#[test]
fn nll_is_a_sum_of_per_covariate_terms() {
    // Each covariate's Gaussian term computed from the emitted means.
    let panel = random_panel(5, 4, 3, 7);
    let params = random_params(dims(3, 4, Some(3), false), &panel, 8);
    let rows: Vec<usize> = (0..5).collect();
    let total = negative_log_likelihood(&params, &panel, &rows).unwrap();
    let sigma = params.sigma();
    let mut per_cov = [0.0; 3];
    for &i in &rows {
        let out = forward_individual(&params, &panel, i).unwrap();
        let std_x = params.standardizer.apply(&panel, i);
        for t in 0..4 {
            for j in 0..3 {
                let r = std_x[t * 3 + j] - out.predicted_means[t * 3 + j];
                per_cov[j] += sigma[j].ln()
                    + r * r / (2.0 * sigma[j] * sigma[j])
                    + 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
        }
    }
    let sum: f64 = per_cov.iter().sum::<f64>() / 5.0;
    assert!((total - sum).abs() < 1e-10);
}

/// A one-step panel whose standardized covariates are emitted exactly.
fn exact_fit() -> (TrajectoryPanel, FactorParams) {
    let panel = TrajectoryPanel::new(1, 1, 2, vec![0.3, -0.7], vec![1.0], vec![0.0]).unwrap();
    let mut params = FactorParams::zeros(dims(2, 3, None, false));
    params.tensors.emission_b = vec![0.3, -0.7];
    (panel, params)
}

#[test]
fn zero_residual_loss_and_sigma_doubling() {
    let (panel, mut params) = exact_fit();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let l0 = negative_log_likelihood(&params, &panel, &[0]).unwrap();
    assert!((l0 - 2.0 * half_log_2pi).abs() < 1e-14);
    params.tensors.log_sigma = vec![2f64.ln(); 2];
    let l1 = negative_log_likelihood(&params, &panel, &[0]).unwrap();
    assert!((l1 - l0 - 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn emission_bias_gradient_vanishes_at_zero_residual() {
    let (panel, params) = exact_fit();
    let g = gradients(&params, &panel, &[0]).unwrap();
    assert_eq!(g.emission_b, vec![0.0, 0.0]);
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let h = 1e-5;
    for (inst, (fc, treat)) in [(None, false), (Some(3), false), (Some(4), true), (None, true), (Some(2), false)]
        .into_iter()
        .enumerate()
    {
        let panel = random_panel(3, 4, 2, 40 + inst as u64);
        let params = random_params(dims(2, 5, fc, treat), &panel, 50 + inst as u64);
        let rows = [0, 1, 2];
        let g = gradients(&params, &panel, &rows).unwrap();
        let analytic = g.tensors();
        for (ti, (name, values)) in analytic.iter().enumerate() {
            for idx in 0..values.len() {
                let mut plus = params.clone();
                plus.tensors.tensors_mut()[ti].1[idx] += h;
                let mut minus = params.clone();
                minus.tensors.tensors_mut()[ti].1[idx] -= h;
                let fd = (negative_log_likelihood(&plus, &panel, &rows).unwrap()
                    - negative_log_likelihood(&minus, &panel, &rows).unwrap())
                    / (2.0 * h);
                let a = values[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel <= 1e-4, "instance {inst} {name}[{idx}]: {a} vs {fd}");
            }
        }
    }
}

#[test]
fn duplicating_the_batch_leaves_gradients_unchanged() {
    let panel = random_panel(3, 4, 2, 61);
    let params = random_params(dims(2, 4, Some(3), false), &panel, 62);
    let once = gradients(&params, &panel, &[0, 1, 2]).unwrap();
    let twice = gradients(&params, &panel, &[0, 1, 2, 0, 1, 2]).unwrap();
    for ((_, a), (_, b)) in once.tensors().iter().zip(twice.tensors().iter()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn out_of_range_and_mismatched_inputs_are_rejected() {
    let panel = random_panel(2, 3, 2, 5);
    let params = FactorParams::zeros(dims(3, 2, None, false));
    assert!(matches!(infer_latents(&params, &panel), Err(Error::DimensionMismatch(_))));
    let params = FactorParams::zeros(dims(2, 2, None, false));
    assert!(matches!(forward_individual(&params, &panel, 2), Err(Error::DimensionMismatch(_))));
    assert!(negative_log_likelihood(&params, &panel, &[]).is_err());
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, hidden_units: 8, fc_hidden: Some(8), seed: 5, ..TrainConfig::default() }
}

#[test]
fn training_descends_and_is_bit_reproducible() {
    let cfg = SimConfig { n_individuals: 200, t_steps: 8, master_seed: 3, ..SimConfig::default() };
    let panel = simulate_panel(&cfg, 0).unwrap().observed;
    let (a, curve_a) = train(&panel, &small_config(5)).unwrap();
    let (b, curve_b) = train(&panel, &small_config(5)).unwrap();
    assert!(curve_a.final_loss < curve_a.initial_loss);
    assert_eq!(curve_a.epoch_losses.len(), 5);
    assert_eq!(a, b);
    assert_eq!(curve_a, curve_b);
    assert_eq!(a.train_config.as_ref().unwrap().epochs, 5);
}

#[test]
fn inferred_latents_are_permutation_equivariant() {
    let cfg = SimConfig { n_individuals: 40, t_steps: 6, master_seed: 4, ..SimConfig::default() };
    let panel = simulate_panel(&cfg, 0).unwrap().observed;
    let (params, _) = train(&panel, &small_config(2)).unwrap();
    let lat = infer_latents(&params, &panel).unwrap();
    assert_eq!(lat, infer_latents(&params, &panel).unwrap());
    let perm: Vec<usize> = (0..40).rev().collect();
    let permuted = infer_latents(&params, &panel.select_individuals(&perm)).unwrap();
    assert_eq!(permuted.latents, lat.select_individuals(&perm).latents);
    for t in 1..6 {
        assert!(crate::numkit::std_dev(&lat.column(t, 0)) > 0.0);
    }
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let panel = random_panel(4, 3, 2, 70);
    let mut params = random_params(dims(2, 3, Some(2), true), &panel, 71);
    params.train_config = Some(TrainConfig::default());
    params.tensors.w_input[0] = 0.1 + 0.2; // not exactly representable in short decimal
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&params, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, params);
    assert_eq!(back.fingerprint(), params.fingerprint());
}

#[test]
fn latent_tracks_a_strong_common_instrument() {
    // Low-noise panel; the latent should line up with the hidden S at some step.
    let cfg = SimConfig { n_individuals: 1000, t_steps: 10, noise_sd: 0.001, master_seed: 21, ..SimConfig::default() };
    let sim = simulate_panel(&cfg, 0).unwrap();
    let tc = TrainConfig { epochs: 20, hidden_units: 32, fc_hidden: Some(32), seed: 2, ..TrainConfig::default() };
    let (params, _) = train(&sim.observed, &tc).unwrap();
    let lat = infer_latents(&params, &sim.observed).unwrap();
    let best = (1..10)
        .map(|t| pearson(&lat.column(t, 0), &sim.latent_s_column(t)).abs())
        .fold(0.0, f64::max);
    assert!(best >= 0.5, "best |r| = {best}");
}
