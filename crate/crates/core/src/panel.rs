//! The observed longitudinal panel shared by the generator, the ingest path
//! and every estimator.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Covariates `X`, treatments `W` and outcomes for `n` individuals over `t_steps`.
///
/// Outcome entry `t` holds the outcome that follows treatment `t` (the
/// lead-by-one convention: `Y_{t+1}`). Steps are 0-based in storage; the
/// public step index used by estimators and reports is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPanel {
    n: usize,
    t_steps: usize,
    k: usize,
    /// `[n][t][k]`
    covariates: Vec<f64>,
    /// `[n][t]`
    treatments: Vec<f64>,
    /// `[n][t]`
    outcomes: Vec<f64>,
}

impl TrajectoryPanel {
    pub fn new(
        n: usize,
        t_steps: usize,
        k: usize,
        covariates: Vec<f64>,
        treatments: Vec<f64>,
        outcomes: Vec<f64>,
    ) -> Result<Self> {
        if covariates.len() != n * t_steps * k
            || treatments.len() != n * t_steps
            || outcomes.len() != n * t_steps
        {
            return Err(Error::DimensionMismatch(format!(
                "panel arrays do not match n={n}, t={t_steps}, k={k}"
            )));
        }
        if covariates.iter().chain(&treatments).chain(&outcomes).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("panel".into()));
        }
        Ok(Self { n, t_steps, k, covariates, treatments, outcomes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn treatments(&self) -> &[f64] {
        &self.treatments
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// Covariate vector of individual `i` at 0-based step `t`.
    pub fn x(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.t_steps + t) * self.k;
        &self.covariates[start..start + self.k]
    }

    pub fn w(&self, i: usize, t: usize) -> f64 {
        self.treatments[i * self.t_steps + t]
    }

    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.outcomes[i * self.t_steps + t]
    }

    /// Covariate history `[t][k]` of individual `i`.
    pub fn x_history(&self, i: usize) -> &[f64] {
        let len = self.t_steps * self.k;
        &self.covariates[i * len..(i + 1) * len]
    }

    pub fn treatment_column(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.w(i, t)).collect()
    }

    pub fn outcome_column(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.y(i, t)).collect()
    }

    /// `n x k` covariates at 0-based step `t`.
    pub fn covariates_at(&self, t: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.n * self.k);
        for i in 0..self.n {
            data.extend_from_slice(self.x(i, t));
        }
        Matrix::from_vec(self.n, self.k, data).expect("panel entries are finite")
    }

    /// The same panel restricted to (and reordered by) `rows`.
    pub fn select_individuals(&self, rows: &[usize]) -> TrajectoryPanel {
        let tk = self.t_steps * self.k;
        let mut cov = Vec::with_capacity(rows.len() * tk);
        let mut w = Vec::with_capacity(rows.len() * self.t_steps);
        let mut y = Vec::with_capacity(rows.len() * self.t_steps);
        for &i in rows {
            cov.extend_from_slice(&self.covariates[i * tk..(i + 1) * tk]);
            w.extend_from_slice(&self.treatments[i * self.t_steps..(i + 1) * self.t_steps]);
            y.extend_from_slice(&self.outcomes[i * self.t_steps..(i + 1) * self.t_steps]);
        }
        TrajectoryPanel {
            n: rows.len(),
            t_steps: self.t_steps,
            k: self.k,
            covariates: cov,
            treatments: w,
            outcomes: y,
        }
    }

    /// Content hash over shape and the bit patterns of every entry.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.n, self.t_steps, self.k] {
            h.update((d as u64).to_le_bytes());
        }
        for v in self.covariates.iter().chain(&self.treatments).chain(&self.outcomes) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}
