//! Per-step effect estimators and effect series.
//!
//! Every estimator works on one step `t` (1-based) of a panel: the effect of
//! `W_t` on the outcome stored at `t`. Steps are independent; an effect
//! series simply applies a step estimator at every `t` and keeps failing
//! steps as gaps.

mod steps;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use steps::{
    adjusted_ols_step, adjusted_ols_step_with, linear_dml_step, linear_dml_step_with, naive_step,
    naive_step_with, tsls_step, Diagnostics, EffectEstimate, EstimateOptions, WEAK_INSTRUMENT_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::factor::LatentPanel;
use crate::panel::TrajectoryPanel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Tsls,
    Naive,
    AdjustedOls,
    LinearDml,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 4] =
        [EstimatorId::Tsls, EstimatorId::Naive, EstimatorId::AdjustedOls, EstimatorId::LinearDml];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::Tsls => "tsls",
            EstimatorId::Naive => "naive",
            EstimatorId::AdjustedOls => "adjusted_ols",
            EstimatorId::LinearDml => "linear_dml",
        }
    }

    /// Whether the estimator consumes an instrument.
    pub fn needs_latents(self) -> bool {
        self == EstimatorId::Tsls
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator `{s}` (expected tsls, naive, adjusted_ols or linear_dml)")))
    }
}

/// A failed step inside a series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: usize,
    pub estimate: Option<EffectEstimate>,
    pub error: Option<StepError>,
}

/// One estimator applied at every step of a panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSeries {
    pub estimator: EstimatorId,
    pub options: EstimateOptions,
    pub panel_fingerprint: String,
    pub latent_fingerprint: Option<String>,
    /// One point per step, ordered by `t`.
    pub points: Vec<SeriesPoint>,
}

/// Applies one step estimator.
pub fn estimate_step(
    panel: &TrajectoryPanel,
    latents: Option<&LatentPanel>,
    estimator: EstimatorId,
    t: usize,
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    match estimator {
        EstimatorId::Tsls => {
            let latents = latents
                .ok_or_else(|| Error::InvalidConfig("tsls needs an instrument (latent panel)".into()))?;
            tsls_step(panel, latents, t, opts)
        }
        EstimatorId::Naive => naive_step_with(panel, t, opts),
        EstimatorId::AdjustedOls => adjusted_ols_step_with(panel, t, opts),
        EstimatorId::LinearDml => linear_dml_step_with(panel, t, opts),
    }
}

/// Runs `estimator` at every step `1..=T`. Per-step failures become gaps
/// carrying the error; only structural problems (a missing or mismatched
/// instrument, bad options) fail the whole series.
pub fn effect_series(
    panel: &TrajectoryPanel,
    latents: Option<&LatentPanel>,
    estimator: EstimatorId,
    opts: &EstimateOptions,
) -> Result<EffectSeries> {
    if estimator.needs_latents() {
        match latents {
            None => return Err(Error::InvalidConfig("tsls needs an instrument (latent panel)".into())),
            Some(l) if !l.matches(panel) => {
                return Err(Error::DimensionMismatch(format!(
                    "latents are {}x{}, panel is {}x{}",
                    l.n,
                    l.t_steps,
                    panel.n(),
                    panel.t_steps()
                )))
            }
            _ => {}
        }
    }
    if estimator == EstimatorId::LinearDml && opts.folds < 2 {
        return Err(Error::InvalidConfig(format!("linear DML needs at least 2 folds, got {}", opts.folds)));
    }
    let points = (1..=panel.t_steps())
        .map(|t| match estimate_step(panel, latents, estimator, t, opts) {
            Ok(e) => SeriesPoint { t, estimate: Some(e), error: None },
            Err(e) => SeriesPoint {
                t,
                estimate: None,
                error: Some(StepError { code: e.code().to_string(), message: e.to_string() }),
            },
        })
        .collect();
    Ok(EffectSeries {
        estimator,
        options: *opts,
        panel_fingerprint: panel.fingerprint(),
        latent_fingerprint: latents.filter(|_| estimator.needs_latents()).map(|l| l.source_fingerprint.clone()),
        points,
    })
}

impl EffectSeries {
    pub fn estimate_at(&self, t: usize) -> Option<&EffectEstimate> {
        self.points.iter().find(|p| p.t == t).and_then(|p| p.estimate.as_ref())
    }

    pub fn estimates(&self) -> impl Iterator<Item = &EffectEstimate> {
        self.points.iter().filter_map(|p| p.estimate.as_ref())
    }

    /// Mean of `|β̂_t − truth|` over the steps that produced an estimate.
    pub fn mean_abs_error(&self, truth: f64) -> Option<f64> {
        let errs: Vec<f64> = self.estimates().map(|e| (e.beta_hat - truth).abs()).collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    /// CSV with columns `t, estimator, beta_hat, std_error, first_stage_stat, error_code`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "estimator", "beta_hat", "std_error", "first_stage_stat", "error_code"])?;
        for p in &self.points {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let e = p.estimate.as_ref();
            w.write_record([
                p.t.to_string(),
                self.estimator.to_string(),
                opt(e.map(|e| e.beta_hat)),
                opt(e.map(|e| e.std_error)),
                opt(e.and_then(|e| e.diagnostics.first_stage_stat)),
                p.error.as_ref().map(|e| e.code.clone()).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests;
