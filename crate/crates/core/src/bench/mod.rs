//! Replicate grids over sample size and autoregressive order: simulate,
//! train, estimate, score against the known effect, aggregate.
//!
//! Every replicate is a pure function of `(spec, sample_size, p, replicate)`,
//! so replicates run on a thread pool and are folded back in grid order; the
//! report does not depend on the number of threads or on completion order.

mod table;

use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use table::{sensitivity_table, SensitivityRow, SensitivityTable};

use crate::datagen::{simulate_panel, SimConfig};
use crate::error::{Error, Result};
use crate::estimate::{effect_series, EffectEstimate, EffectSeries, EstimateOptions, EstimatorId};
use crate::factor::{infer_latents, train, TrainConfig};
use crate::numkit::{mean, std_dev};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::InvalidConfig(format!("unknown profile `{s}` (expected desk or paper)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub sample_sizes: Vec<usize>,
    pub p_orders: Vec<usize>,
    pub replicates: usize,
    /// 1-based steps scored in the report.
    pub t_report: Vec<usize>,
    pub estimators: Vec<EstimatorId>,
    pub master_seed: u64,
    pub train_config: TrainConfig,
    /// Generator settings; `n_individuals`, `p_order` and `master_seed` are
    /// overridden per cell.
    pub sim: SimConfig,
    pub estimate_options: EstimateOptions,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self::paper()
    }
}

impl BenchSpec {
    /// Full grid: N in {2k, 4k, 6k, 8k}, p in {1, 3}, 30 replicates.
    pub fn paper() -> Self {
        Self {
            sample_sizes: vec![2000, 4000, 6000, 8000],
            p_orders: vec![1, 3],
            replicates: 30,
            t_report: vec![1, 5, 10, 15, 20],
            estimators: vec![EstimatorId::Naive, EstimatorId::Tsls],
            master_seed: 0,
            train_config: TrainConfig::default(),
            sim: SimConfig::default(),
            estimate_options: EstimateOptions { ridge_fallback: true, ..EstimateOptions::default() },
        }
    }

    /// Reduced grid for a single machine: N in {2000, 5000}, 10 replicates.
    pub fn desk() -> Self {
        Self { sample_sizes: vec![2000, 5000], replicates: 10, ..Self::paper() }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.sample_sizes.is_empty() || self.p_orders.is_empty() || self.estimators.is_empty() {
            return fail("sample_sizes, p_orders and estimators must be non-empty".into());
        }
        if self.replicates == 0 {
            return fail("replicates must be >= 1".into());
        }
        if let Some(&t) = self.t_report.iter().find(|&&t| t == 0 || t > self.sim.t_steps) {
            return fail(format!("report step {t} outside 1..={}", self.sim.t_steps));
        }
        for &n in &self.sample_sizes {
            for &p in &self.p_orders {
                self.cell_config(n, p).validate()?;
            }
        }
        if self.estimators.iter().any(|e| e.needs_latents()) {
            self.train_config.validate()?;
        }
        Ok(())
    }

    pub fn cell_config(&self, sample_size: usize, p: usize) -> SimConfig {
        SimConfig { n_individuals: sample_size, p_order: p, master_seed: self.master_seed, ..self.sim.clone() }
    }

    /// Training seed of one replicate, derived from the master seed and grid position.
    pub fn train_seed(&self, sample_size: usize, p: usize, replicate: usize) -> u64 {
        let mut h = self.master_seed ^ 0x5851_f42d_4c95_7f2d;
        for v in [sample_size as u64, p as u64, replicate as u64] {
            h = splitmix(h ^ v);
        }
        h
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `|β̂ − β|`.
pub fn abs_error(estimate: &EffectEstimate, truth: f64) -> f64 {
    (estimate.beta_hat - truth).abs()
}

/// One scored (estimator, step) entry of a replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredStep {
    pub estimator: EstimatorId,
    pub t: usize,
    pub beta_hat: Option<f64>,
    pub abs_error: Option<f64>,
    pub error_code: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Provenance and scores of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub sample_size: usize,
    pub p: usize,
    pub replicate: usize,
    /// Random stream of the generator: `(master_seed, replicate)`.
    pub sim_stream: (u64, u64),
    pub panel_fingerprint: Option<String>,
    pub training: Option<TrainingSummary>,
    pub failure: Option<String>,
    pub scores: Vec<ScoredStep>,
}

/// Everything one replicate produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutput {
    pub record: ReplicateRecord,
    pub truth: f64,
    pub series: Vec<EffectSeries>,
}

/// Simulates, trains (only when an estimator needs an instrument), and runs
/// every requested estimator. Failures are recorded, never raised.
pub fn run_replicate(spec: &BenchSpec, sample_size: usize, p: usize, replicate: usize) -> ReplicateOutput {
    let cfg = spec.cell_config(sample_size, p);
    let mut record = ReplicateRecord {
        sample_size,
        p,
        replicate,
        sim_stream: (cfg.master_seed, replicate as u64),
        panel_fingerprint: None,
        training: None,
        failure: None,
        scores: Vec::new(),
    };
    let fail_all = |record: &mut ReplicateRecord, code: &str| {
        for &e in &spec.estimators {
            for &t in &spec.t_report {
                record.scores.push(ScoredStep { estimator: e, t, beta_hat: None, abs_error: None, error_code: Some(code.into()) });
            }
        }
    };
    let sim = match simulate_panel(&cfg, replicate as u64) {
        Ok(s) => s,
        Err(e) => {
            record.failure = Some(e.to_string());
            fail_all(&mut record, e.code());
            return ReplicateOutput { record, truth: cfg.rho_w, series: Vec::new() };
        }
    };
    let panel = &sim.observed;
    record.panel_fingerprint = Some(panel.fingerprint());

    let mut latents = None;
    let mut train_error = None;
    if spec.estimators.iter().any(|e| e.needs_latents()) {
        let seed = spec.train_seed(sample_size, p, replicate);
        let tc = TrainConfig { seed, ..spec.train_config.clone() };
        match train(panel, &tc).and_then(|(params, curve)| Ok((infer_latents(&params, panel)?, curve))) {
            Ok((l, curve)) => {
                record.training =
                    Some(TrainingSummary { seed, initial_loss: curve.initial_loss, final_loss: curve.final_loss });
                latents = Some(l);
            }
            Err(e) => {
                record.failure = Some(format!("training: {e}"));
                train_error = Some(e);
            }
        }
    }

    let mut all_series = Vec::new();
    for &est in &spec.estimators {
        let series = match (est.needs_latents(), &train_error) {
            (true, Some(e)) => Err(e.code()),
            _ => effect_series(panel, latents.as_ref(), est, &spec.estimate_options).map_err(|e| e.code()),
        };
        for &t in &spec.t_report {
            let step = match &series {
                Err(code) => ScoredStep { estimator: est, t, beta_hat: None, abs_error: None, error_code: Some(code.to_string()) },
                Ok(s) => {
                    let point = s.points.iter().find(|pt| pt.t == t);
                    match point.and_then(|pt| pt.estimate.as_ref()) {
                        Some(e) => ScoredStep {
                            estimator: est,
                            t,
                            beta_hat: Some(e.beta_hat),
                            abs_error: Some(abs_error(e, sim.true_effect)),
                            error_code: None,
                        },
                        None => ScoredStep {
                            estimator: est,
                            t,
                            beta_hat: None,
                            abs_error: None,
                            error_code: Some(
                                point.and_then(|pt| pt.error.as_ref()).map_or("missing_step".into(), |e| e.code.clone()),
                            ),
                        },
                    }
                }
            };
            record.scores.push(step);
        }
        if let Ok(s) = series {
            all_series.push(s);
        }
    }
    ReplicateOutput { record, truth: sim.true_effect, series: all_series }
}

/// Aggregate of one (sample size, p, estimator, step) cell over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sample_size: usize,
    pub p: usize,
    pub estimator: EstimatorId,
    pub t: usize,
    /// Over successful replicates only; `None` when none succeeded.
    pub mean_abs_error: Option<f64>,
    pub std_abs_error: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub spec: BenchSpec,
    pub code_version: String,
    pub cells: Vec<CellSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

/// Runs the whole grid on a pool of `threads` workers (all available cores
/// when `None`).
pub fn run_benchmark(spec: &BenchSpec, threads: Option<usize>) -> Result<BenchReport> {
    spec.validate()?;
    let tasks: Vec<(usize, usize, usize)> = spec
        .sample_sizes
        .iter()
        .flat_map(|&n| spec.p_orders.iter().flat_map(move |&p| (0..spec.replicates).map(move |r| (n, p, r))))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let total = tasks.len();
    let records: Vec<ReplicateRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, p, r)| {
                let rec = std::panic::catch_unwind(|| run_replicate(spec, n, p, r).record).unwrap_or_else(|_| {
                    let mut rec = ReplicateRecord {
                        sample_size: n,
                        p,
                        replicate: r,
                        sim_stream: (spec.master_seed, r as u64),
                        panel_fingerprint: None,
                        training: None,
                        failure: Some("replicate panicked".into()),
                        scores: Vec::new(),
                    };
                    for &e in &spec.estimators {
                        for &t in &spec.t_report {
                            rec.scores.push(ScoredStep { estimator: e, t, beta_hat: None, abs_error: None, error_code: Some("panic".into()) });
                        }
                    }
                    rec
                });
                info!("replicate done: N={n} p={p} r={r} ({total} total)");
                rec
            })
            .collect()
    });
    Ok(aggregate(spec, records))
}

/// Folds replicate records into cell summaries, in grid order.
pub fn aggregate(spec: &BenchSpec, replicates: Vec<ReplicateRecord>) -> BenchReport {
    let mut cells = Vec::new();
    for &n in &spec.sample_sizes {
        for &p in &spec.p_orders {
            for &est in &spec.estimators {
                for &t in &spec.t_report {
                    let errs: Vec<Option<f64>> = replicates
                        .iter()
                        .filter(|r| r.sample_size == n && r.p == p)
                        .flat_map(|r| r.scores.iter().filter(|s| s.estimator == est && s.t == t))
                        .map(|s| s.abs_error)
                        .collect();
                    let ok: Vec<f64> = errs.iter().flatten().copied().collect();
                    cells.push(CellSummary {
                        sample_size: n,
                        p,
                        estimator: est,
                        t,
                        mean_abs_error: (!ok.is_empty()).then(|| mean(&ok)),
                        std_abs_error: (!ok.is_empty()).then(|| std_dev(&ok)),
                        n_ok: ok.len(),
                        n_failed: errs.len() - ok.len(),
                    });
                }
            }
        }
    }
    BenchReport { spec: spec.clone(), code_version: env!("CARGO_PKG_VERSION").to_string(), cells, replicates }
}

impl BenchReport {
    pub fn cell(&self, sample_size: usize, p: usize, estimator: EstimatorId, t: usize) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sample_size == sample_size && c.p == p && c.estimator == estimator && c.t == t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per (cell, replicate).
    pub fn to_flat_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_size", "p", "estimator", "t", "replicate", "beta_hat", "abs_error", "error_code"])?;
        for r in &self.replicates {
            for s in &r.scores {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([
                    r.sample_size.to_string(),
                    r.p.to_string(),
                    s.estimator.to_string(),
                    s.t.to_string(),
                    r.replicate.to_string(),
                    opt(s.beta_hat),
                    opt(s.abs_error),
                    s.error_code.clone().unwrap_or_default(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_flat_csv()?).map_err(|e| Error::io(&csv, e))
    }

    pub fn read_json(path: &Path) -> Result<BenchReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
