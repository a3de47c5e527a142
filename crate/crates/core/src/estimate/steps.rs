use serde::{Deserialize, Serialize};

use super::EstimatorId;
use crate::error::{Error, Result};
use crate::factor::LatentPanel;
use crate::numkit::{fit_least_squares, LeastSquares, Matrix, RankPolicy};
use crate::panel::TrajectoryPanel;

/// Stage-1 strength below which an instrument is flagged as weak.
pub const WEAK_INSTRUMENT_THRESHOLD: f64 = 10.0;

/// Per-estimate diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Partial F statistic of the excluded instruments in stage 1 (TSLS only).
    /// `None` for other estimators, or when stage 1 fits exactly.
    pub first_stage_stat: Option<f64>,
    pub weak_instrument: bool,
    /// Cross-fitting folds (linear DML only).
    pub folds: Option<usize>,
    /// Set when a regression needed the ridge fallback.
    pub ridge_fallback: bool,
}

/// Estimated effect of `W_t` on the following outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// 1-based step.
    pub t: usize,
    pub estimator: EstimatorId,
    pub beta_hat: f64,
    pub std_error: f64,
    pub diagnostics: Diagnostics,
}

/// Shared knobs of the step estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    /// Include `X_t` as exogenous controls in both TSLS stages.
    pub include_covariates: bool,
    /// Cross-fitting folds for linear DML.
    pub folds: usize,
    /// Rescue rank-deficient designs with a small ridge penalty instead of failing.
    pub ridge_fallback: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { include_covariates: true, folds: 5, ridge_fallback: false }
    }
}

impl EstimateOptions {
    fn policy(&self) -> RankPolicy {
        if self.ridge_fallback {
            RankPolicy::RidgeFallback
        } else {
            RankPolicy::Strict
        }
    }
}

/// 0-based storage index of 1-based step `t`, checked against the panel.
fn step_index(panel: &TrajectoryPanel, t: usize) -> Result<usize> {
    if t == 0 || t > panel.t_steps() {
        return Err(Error::InvalidConfig(format!("step {t} outside 1..={}", panel.t_steps())));
    }
    Ok(t - 1)
}

fn treatment_at(panel: &TrajectoryPanel, t: usize) -> Result<Vec<f64>> {
    let w = panel.treatment_column(t - 1);
    match w.first() {
        Some(&first) if w.iter().any(|&v| v != first) => Ok(w),
        _ => Err(Error::DegenerateTreatment { t }),
    }
}

fn design(columns: &[&[f64]], n: usize) -> Result<Matrix> {
    let ones = vec![1.0; n];
    let mut all: Vec<&[f64]> = vec![&ones];
    all.extend_from_slice(columns);
    Matrix::from_columns(&all)
}

fn covariate_columns(panel: &TrajectoryPanel, s: usize) -> Vec<Vec<f64>> {
    let x = panel.covariates_at(s);
    (0..x.cols()).map(|j| x.column(j)).collect()
}

fn checked(fit: &LeastSquares, j: usize) -> Result<(f64, f64)> {
    let beta = fit.coefficients[j];
    let se = fit.std_error(j);
    if !beta.is_finite() || !se.is_finite() {
        return Err(Error::NonFinite("effect estimate".into()));
    }
    Ok((beta, se))
}

/// Unadjusted baseline: OLS of the outcome on `[1, W_t]`.
pub fn naive_step(panel: &TrajectoryPanel, t: usize) -> Result<EffectEstimate> {
    naive_step_with(panel, t, &EstimateOptions::default())
}

pub fn naive_step_with(panel: &TrajectoryPanel, t: usize, opts: &EstimateOptions) -> Result<EffectEstimate> {
    let s = step_index(panel, t)?;
    let w = treatment_at(panel, t)?;
    let y = panel.outcome_column(s);
    let fit = fit_least_squares(&design(&[&w], panel.n())?, &y, opts.policy())?;
    let (beta_hat, std_error) = checked(&fit, 1)?;
    Ok(EffectEstimate {
        t,
        estimator: EstimatorId::Naive,
        beta_hat,
        std_error,
        diagnostics: Diagnostics { ridge_fallback: fit.ridge_lambda.is_some(), ..Diagnostics::default() },
    })
}

/// Measured-covariate adjustment: OLS of the outcome on `[1, W_t, X_t]`.
pub fn adjusted_ols_step(panel: &TrajectoryPanel, t: usize) -> Result<EffectEstimate> {
    adjusted_ols_step_with(panel, t, &EstimateOptions::default())
}

pub fn adjusted_ols_step_with(
    panel: &TrajectoryPanel,
    t: usize,
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    let s = step_index(panel, t)?;
    let w = treatment_at(panel, t)?;
    let y = panel.outcome_column(s);
    let xs = covariate_columns(panel, s);
    let mut cols: Vec<&[f64]> = vec![&w];
    cols.extend(xs.iter().map(Vec::as_slice));
    let fit = fit_least_squares(&design(&cols, panel.n())?, &y, opts.policy())?;
    let (beta_hat, std_error) = checked(&fit, 1)?;
    Ok(EffectEstimate {
        t,
        estimator: EstimatorId::AdjustedOls,
        beta_hat,
        std_error,
        diagnostics: Diagnostics { ridge_fallback: fit.ridge_lambda.is_some(), ..Diagnostics::default() },
    })
}

/// Two-stage least squares with the step-`t` latent as instrument.
///
/// Stage 1 regresses `W_t` on `[1, L_t, X_t]`, stage 2 the outcome on
/// `[1, Ŵ_t, X_t]` (`X_t` dropped from both when `include_covariates` is off).
/// The standard error uses stage-2 coefficients with residuals computed from
/// the observed `W_t`, not `Ŵ_t`.
pub fn tsls_step(
    panel: &TrajectoryPanel,
    latents: &LatentPanel,
    t: usize,
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    let s = step_index(panel, t)?;
    if !latents.matches(panel) {
        return Err(Error::DimensionMismatch(format!(
            "latents are {}x{}, panel is {}x{}",
            latents.n,
            latents.t_steps,
            panel.n(),
            panel.t_steps()
        )));
    }
    let n = panel.n();
    let w = treatment_at(panel, t)?;
    let y = panel.outcome_column(s);
    let xs = if opts.include_covariates { covariate_columns(panel, s) } else { Vec::new() };
    let instruments: Vec<Vec<f64>> = (0..latents.latent_dim).map(|d| latents.column(s, d)).collect();
    for z in &instruments {
        if z.iter().all(|&v| v == z[0]) {
            return Err(Error::RankDeficient { smallest: 0.0, largest: 0.0 });
        }
    }

    let mut stage1_cols: Vec<&[f64]> = instruments.iter().map(Vec::as_slice).collect();
    stage1_cols.extend(xs.iter().map(Vec::as_slice));
    let stage1 = fit_least_squares(&design(&stage1_cols, n)?, &w, opts.policy())?;
    let w_hat: Vec<f64> = w.iter().zip(&stage1.residuals).map(|(a, r)| a - r).collect();

    // Partial F of the excluded instruments against the controls-only fit.
    let controls: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let restricted = fit_least_squares(&design(&controls, n)?, &w, RankPolicy::RidgeFallback)?;
    let q = instruments.len() as f64;
    let dof = n.saturating_sub(stage1.d()).max(1) as f64;
    let rss_u = stage1.rss();
    let f_stat = ((restricted.rss() - rss_u) / q) / (rss_u / dof);
    let first_stage_stat = f_stat.is_finite().then_some(f_stat);

    let mut stage2_cols: Vec<&[f64]> = vec![&w_hat];
    stage2_cols.extend(xs.iter().map(Vec::as_slice));
    let stage2 = fit_least_squares(&design(&stage2_cols, n)?, &y, opts.policy())?;
    let beta_hat = stage2.coefficients[1];

    let mut structural_cols: Vec<&[f64]> = vec![&w];
    structural_cols.extend(xs.iter().map(Vec::as_slice));
    let structural = design(&structural_cols, n)?.matvec(&stage2.coefficients)?;
    let rss: f64 = y.iter().zip(&structural).map(|(a, b)| (a - b) * (a - b)).sum();
    let sigma2 = rss / n.saturating_sub(stage2.d()).max(1) as f64;
    let std_error = (sigma2 * stage2.xtx_inverse.get(1, 1)).max(0.0).sqrt();
    if !beta_hat.is_finite() || !std_error.is_finite() {
        return Err(Error::NonFinite("effect estimate".into()));
    }
    let weak = first_stage_stat.is_some_and(|f| f < WEAK_INSTRUMENT_THRESHOLD);
    if weak {
        log::warn!("weak instrument at step {t}: first-stage F = {f_stat:.3}");
    }
    Ok(EffectEstimate {
        t,
        estimator: EstimatorId::Tsls,
        beta_hat,
        std_error,
        diagnostics: Diagnostics {
            first_stage_stat,
            weak_instrument: weak,
            folds: None,
            ridge_fallback: stage1.ridge_lambda.is_some() || stage2.ridge_lambda.is_some(),
        },
    })
}

/// Cross-fitted partialling-out estimator with linear nuisances.
///
/// `E[Y | X_t]` and `E[W | X_t]` are fitted by OLS on `[1, X_t]` out of fold;
/// the effect is the no-intercept slope of outcome residuals on treatment
/// residuals. Fold membership depends only on each individual's own data, so
/// the estimate does not depend on the order of individuals.
pub fn linear_dml_step(panel: &TrajectoryPanel, t: usize, folds: usize) -> Result<EffectEstimate> {
    linear_dml_step_with(panel, t, &EstimateOptions { folds, ..EstimateOptions::default() })
}

pub fn linear_dml_step_with(
    panel: &TrajectoryPanel,
    t: usize,
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    let s = step_index(panel, t)?;
    let k = opts.folds;
    let n = panel.n();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("linear DML needs at least 2 folds, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::InvalidConfig(format!("linear DML with {k} folds needs at least {} individuals", 2 * k)));
    }
    let w = treatment_at(panel, t)?;
    let y = panel.outcome_column(s);
    let x = panel.covariates_at(s);
    let full = design(&covariate_columns(panel, s).iter().map(Vec::as_slice).collect::<Vec<_>>(), n)?;

    let fold_of = fold_assignment(&y, &w, &x, k);
    let mut y_res = vec![0.0; n];
    let mut w_res = vec![0.0; n];
    let mut ridge = false;
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let design_train = full.select_rows(&train);
        let design_test = full.select_rows(&test);
        for (target, out) in [(&y, &mut y_res), (&w, &mut w_res)] {
            let sub: Vec<f64> = train.iter().map(|&i| target[i]).collect();
            let fit = fit_least_squares(&design_train, &sub, opts.policy())?;
            ridge |= fit.ridge_lambda.is_some();
            let pred = design_test.matvec(&fit.coefficients)?;
            for (&i, p) in test.iter().zip(pred) {
                out[i] = target[i] - p;
            }
        }
    }

    let sww: f64 = w_res.iter().map(|v| v * v).sum();
    if !(sww > 0.0) {
        return Err(Error::DegenerateTreatment { t });
    }
    let beta_hat = w_res.iter().zip(&y_res).map(|(a, b)| a * b).sum::<f64>() / sww;
    let rss: f64 = w_res.iter().zip(&y_res).map(|(a, b)| (b - beta_hat * a).powi(2)).sum();
    let std_error = (rss / (n - 1) as f64 / sww).sqrt();
    if !beta_hat.is_finite() || !std_error.is_finite() {
        return Err(Error::NonFinite("effect estimate".into()));
    }
    Ok(EffectEstimate {
        t,
        estimator: EstimatorId::LinearDml,
        beta_hat,
        std_error,
        diagnostics: Diagnostics { folds: Some(k), ridge_fallback: ridge, ..Diagnostics::default() },
    })
}

/// Assigns folds by ranking individuals on a hash of their step data, so
/// the assignment is balanced and invariant to the order of individuals.
fn fold_assignment(y: &[f64], w: &[f64], x: &Matrix, k: usize) -> Vec<usize> {
    let row_values = |i: usize| -> Vec<f64> {
        let mut v = vec![y[i], w[i]];
        v.extend_from_slice(x.row(i));
        v
    };
    let key = |i: usize| -> u64 {
        row_values(i).iter().fold(0x9e37_79b9_7f4a_7c15u64, |h, v| mix(h ^ v.to_bits()))
    };
    let mut order: Vec<(u64, usize)> = (0..y.len()).map(|i| (key(i), i)).collect();
    order.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let (ra, rb) = (row_values(a.1), row_values(b.1));
            ra.iter().zip(&rb).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut fold = vec![0; y.len()];
    for (rank, (_, i)) in order.into_iter().enumerate() {
        fold[i] = rank % k;
    }
    fold
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
