use proptest::prelude::*;

use super::*;
use crate::numkit::{sigmoid, RngStream};

/// Toy panel: `Z` instrument, `X` observed, `U` hidden confounder (scaled by
/// `u_scale`), `W ~ Bernoulli(σ(Z + ΣX + U))`, `Y = 0.5 W + 0.5 ΣX + U + noise`.
/// Returns the panel and `Z` as a one-dimensional latent panel.
fn toy(n: usize, steps: usize, k: usize, u_scale: f64, noise: f64, seed: u64) -> (TrajectoryPanel, LatentPanel) {
    let mut rng = RngStream::new(seed, 77);
    let (mut x, mut w, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        for _ in 0..steps {
            let zi = rng.standard_normal();
            let xi: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
            let u = u_scale * rng.standard_normal();
            let sx: f64 = xi.iter().sum();
            let wi = f64::from(u8::from(rng.bernoulli(sigmoid(2.0 * zi + 0.5 * sx + 2.0 * u))));
            y.push(0.5 * wi + 0.5 * sx + u + noise * rng.standard_normal());
            x.extend(xi);
            w.push(wi);
            z.push(zi);
        }
    }
    let panel = TrajectoryPanel::new(n, steps, k, x, w, y).unwrap();
    let lat = LatentPanel::from_values(n, steps, 1, z, "toy").unwrap();
    (panel, lat)
}

fn with_columns(panel: &TrajectoryPanel, x: Option<Vec<f64>>, w: Option<Vec<f64>>, y: Option<Vec<f64>>) -> TrajectoryPanel {
    TrajectoryPanel::new(
        panel.n(),
        panel.t_steps(),
        panel.k(),
        x.unwrap_or_else(|| panel.covariates().to_vec()),
        w.unwrap_or_else(|| panel.treatments().to_vec()),
        y.unwrap_or_else(|| panel.outcomes().to_vec()),
    )
    .unwrap()
}

const OPTS: EstimateOptions = EstimateOptions { include_covariates: true, folds: 5, ridge_fallback: false };

#[test]
fn unconfounded_noiseless_recovery() {
    let (panel, _) = toy(300, 2, 3, 0.0, 0.0, 1);
    for t in 1..=2 {
        assert!((adjusted_ols_step(&panel, t).unwrap().beta_hat - 0.5).abs() < 1e-9);
        assert!((linear_dml_step(&panel, t, 5).unwrap().beta_hat - 0.5).abs() < 1e-9);
    }
}

#[test]
fn naive_recovers_effect_without_covariates_or_confounding() {
    let (panel, _) = toy(200, 1, 2, 0.0, 0.0, 2);
    let zero_x = vec![0.0; panel.covariates().len()];
    let y: Vec<f64> = panel.treatments().iter().map(|w| 0.5 * w).collect();
    let clean = with_columns(&panel, Some(zero_x), None, Some(y));
    assert!((naive_step(&clean, 1).unwrap().beta_hat - 0.5).abs() < 1e-12);
}

#[test]
fn adjusted_ols_reduces_to_naive_when_covariates_vanish() {
    let (panel, _) = toy(150, 1, 2, 1.0, 0.1, 3);
    // Adjusting for an all-zero block is impossible without the ridge fallback,
    // which then leaves the treatment coefficient at the naive value.
    let clean = with_columns(&panel, Some(vec![0.0; panel.covariates().len()]), None, None);
    let naive = naive_step(&clean, 1).unwrap();
    assert!(matches!(adjusted_ols_step(&clean, 1), Err(Error::RankDeficient { .. })));
    let opts = EstimateOptions { ridge_fallback: true, ..OPTS };
    let adj = adjusted_ols_step_with(&clean, 1, &opts).unwrap();
    assert!(adj.diagnostics.ridge_fallback);
    assert!((adj.beta_hat - naive.beta_hat).abs() < 1e-6);
}

#[test]
fn tsls_agrees_with_adjusted_ols_without_confounding() {
    let (panel, lat) = toy(4000, 1, 2, 0.0, 0.3, 4);
    let iv = tsls_step(&panel, &lat, 1, &OPTS).unwrap();
    let ols = adjusted_ols_step(&panel, 1).unwrap();
    let joint = (iv.std_error.powi(2) + ols.std_error.powi(2)).sqrt();
    assert!((iv.beta_hat - ols.beta_hat).abs() <= 2.0 * joint);
    assert!(iv.diagnostics.first_stage_stat.unwrap() > WEAK_INSTRUMENT_THRESHOLD);
}

#[test]
fn tsls_removes_confounding_that_ols_keeps() {
    let (panel, lat) = toy(20000, 1, 2, 1.0, 0.1, 5);
    let iv = tsls_step(&panel, &lat, 1, &OPTS).unwrap();
    let ols = adjusted_ols_step(&panel, 1).unwrap();
    assert!((iv.beta_hat - 0.5).abs() < 0.1, "{}", iv.beta_hat);
    assert!((ols.beta_hat - 0.5).abs() > 0.5, "{}", ols.beta_hat);
}

#[test]
fn degenerate_inputs_are_reported() {
    let (panel, lat) = toy(50, 2, 2, 0.0, 0.1, 6);
    let w = vec![1.0; panel.treatments().len()];
    let constant_w = with_columns(&panel, None, Some(w), None);
    assert!(matches!(naive_step(&constant_w, 1), Err(Error::DegenerateTreatment { t: 1 })));
    assert!(matches!(tsls_step(&constant_w, &lat, 2, &OPTS), Err(Error::DegenerateTreatment { t: 2 })));
    let flat = LatentPanel::from_values(50, 2, 1, vec![3.0; 100], "flat").unwrap();
    assert!(matches!(tsls_step(&panel, &flat, 1, &OPTS), Err(Error::RankDeficient { .. })));
    assert!(naive_step(&panel, 0).is_err());
    assert!(naive_step(&panel, 3).is_err());
    assert!(linear_dml_step(&panel, 1, 1).is_err());
    assert!(linear_dml_step(&panel, 1, 26).is_err());
}

#[test]
fn weak_instrument_is_flagged_not_fatal() {
    let (panel, _) = toy(500, 1, 2, 0.0, 0.1, 7);
    let mut rng = RngStream::new(8, 0);
    let noise: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
    let lat = LatentPanel::from_values(500, 1, 1, noise, "noise").unwrap();
    let est = tsls_step(&panel, &lat, 1, &OPTS).unwrap();
    assert!(est.diagnostics.weak_instrument);
}

#[test]
fn flipping_one_treatment_moves_the_estimate_continuously() {
    let (panel, _) = toy(400, 1, 2, 1.0, 0.1, 9);
    let mut w = panel.treatments().to_vec();
    w[17] = 1.0 - w[17];
    let a = naive_step(&panel, 1).unwrap().beta_hat;
    let b = naive_step(&with_columns(&panel, None, Some(w), None), 1).unwrap().beta_hat;
    assert!((a - b).abs() < 0.05);
}

#[test]
fn dml_fold_counts_agree() {
    let (panel, _) = toy(5000, 1, 3, 0.0, 0.5, 10);
    let a = linear_dml_step(&panel, 1, 2).unwrap();
    let b = linear_dml_step(&panel, 1, 5).unwrap();
    assert_eq!(b.diagnostics.folds, Some(5));
    assert!((a.beta_hat - b.beta_hat).abs() <= 2.0 * a.std_error.max(b.std_error));
}

#[test]
fn series_shape_determinism_and_composition() {
    let (mut panel, lat) = toy(120, 6, 2, 0.5, 0.1, 11);
    let mut w = panel.treatments().to_vec();
    for i in 0..120 {
        w[i * 6 + 3] = 0.0; // step 4 degenerate
    }
    panel = with_columns(&panel, None, Some(w), None);
    for est in EstimatorId::ALL {
        let s = effect_series(&panel, Some(&lat), est, &OPTS).unwrap();
        assert_eq!(s.points.iter().map(|p| p.t).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(s, effect_series(&panel, Some(&lat), est, &OPTS).unwrap());
        assert_eq!(s.points[3].error.as_ref().unwrap().code, "degenerate_treatment");
        for t in [1, 2, 3, 5, 6] {
            let single = estimate_step(&panel, Some(&lat), est, t, &OPTS).unwrap();
            assert_eq!(s.estimate_at(t), Some(&single));
        }
        let csv = s.to_csv().unwrap();
        assert!(csv.starts_with("t,estimator,beta_hat,std_error,first_stage_stat,error_code\n"));
        assert!(csv.contains("4,") && csv.contains("degenerate_treatment"));
    }
    assert!(effect_series(&panel, None, EstimatorId::Tsls, &OPTS).is_err());
}

#[test]
fn series_json_round_trips() {
    let (panel, lat) = toy(80, 3, 2, 0.5, 0.1, 12);
    let s = effect_series(&panel, Some(&lat), EstimatorId::Tsls, &OPTS).unwrap();
    let back: EffectSeries = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
}

#[test]
fn estimator_names_parse() {
    for e in EstimatorId::ALL {
        assert_eq!(e.as_str().parse::<EstimatorId>().unwrap(), e);
    }
    assert!("ols".parse::<EstimatorId>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tsls_is_invariant_to_instrument_rescaling(seed in 0u64..10_000, scale in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let (panel, lat) = toy(200, 1, 2, 1.0, 0.2, seed);
        let a = tsls_step(&panel, &lat, 1, &OPTS).unwrap();
        let b = tsls_step(&panel, &lat.scaled(scale), 1, &OPTS).unwrap();
        prop_assert!((a.beta_hat - b.beta_hat).abs() <= 1e-8 * a.beta_hat.abs().max(1.0));
    }

    #[test]
    fn tsls_with_treatment_as_instrument_is_adjusted_ols(seed in 0u64..10_000) {
        let (panel, _) = toy(150, 1, 3, 1.0, 0.2, seed);
        let own = LatentPanel::from_values(150, 1, 1, panel.treatments().to_vec(), "w").unwrap();
        let a = tsls_step(&panel, &own, 1, &OPTS).unwrap();
        let b = adjusted_ols_step(&panel, 1).unwrap();
        prop_assert!((a.beta_hat - b.beta_hat).abs() <= 1e-8);
    }

    #[test]
    fn estimates_ignore_the_order_of_individuals(seed in 0u64..10_000, rot in 1usize..99) {
        let (panel, lat) = toy(100, 1, 2, 1.0, 0.2, seed);
        let perm: Vec<usize> = (0..100).map(|i| (i * 37 + rot) % 100).collect();
        let (pp, pl) = (panel.select_individuals(&perm), lat.select_individuals(&perm));
        for e in EstimatorId::ALL {
            let a = estimate_step(&panel, Some(&lat), e, 1, &OPTS).unwrap();
            let b = estimate_step(&pp, Some(&pl), e, 1, &OPTS).unwrap();
            prop_assert!((a.beta_hat - b.beta_hat).abs() <= 1e-10, "{e}");
            prop_assert!((a.std_error - b.std_error).abs() <= 1e-10, "{e}");
        }
    }
}
