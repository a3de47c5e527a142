use std::fmt;

use serde::{Deserialize, Serialize};

use super::BenchReport;
use crate::error::{Error, Result};
use crate::estimate::EstimatorId;

/// Mean ± standard deviation of the absolute error for one estimator and
/// one autoregressive order, across the report steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub p: usize,
    pub estimator: EstimatorId,
    /// `(mean, std)` per column; `None` when no replicate succeeded.
    pub values: Vec<Option<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub sample_size: usize,
    pub t_columns: Vec<usize>,
    pub rows: Vec<SensitivityRow>,
}

fn label(e: EstimatorId) -> &'static str {
    match e {
        EstimatorId::Naive => "Baseline",
        EstimatorId::Tsls => "TIFM",
        EstimatorId::AdjustedOls => "AdjustedOLS",
        EstimatorId::LinearDml => "LinearDML",
    }
}

/// Rows per `p` (in the given order) and per estimator of the report, with
/// one column per report step, at `sample_size`.
pub fn sensitivity_table(report: &BenchReport, sample_size: usize, p_values: &[usize]) -> Result<SensitivityTable> {
    let t_columns = report.spec.t_report.clone();
    let mut rows = Vec::new();
    for &p in p_values {
        for &est in &report.spec.estimators {
            let values = t_columns
                .iter()
                .map(|&t| {
                    let cell = report
                        .cell(sample_size, p, est, t)
                        .ok_or_else(|| Error::MissingCell(format!("N={sample_size}, p={p}, {est}, t={t}")))?;
                    Ok(cell.mean_abs_error.zip(cell.std_abs_error))
                })
                .collect::<Result<_>>()?;
            rows.push(SensitivityRow { p, estimator: est, values });
        }
    }
    Ok(SensitivityTable { sample_size, t_columns, rows })
}

impl SensitivityTable {
    /// Columns `p, method, t=<t>_mean, t=<t>_std, …`, full precision.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sample_size".to_string(), "p".into(), "estimator".into()];
        for t in &self.t_columns {
            header.push(format!("t{t}_mean"));
            header.push(format!("t{t}_std"));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![self.sample_size.to_string(), r.p.to_string(), r.estimator.to_string()];
            for v in &r.values {
                match v {
                    Some((m, s)) => {
                        rec.push(m.to_string());
                        rec.push(s.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<SensitivityTable> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        let t_columns = header
            .iter()
            .skip(3)
            .step_by(2)
            .map(|h| {
                h.trim_start_matches('t')
                    .trim_end_matches("_mean")
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad table header `{h}`")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut rows = Vec::new();
        let mut sample_size = 0;
        let bad = |v: &str| Error::InvalidConfig(format!("bad table value `{v}`"));
        for rec in rdr.records() {
            let rec = rec?;
            sample_size = rec[0].parse().map_err(|_| bad(&rec[0]))?;
            let p = rec[1].parse().map_err(|_| bad(&rec[1]))?;
            let estimator = rec[2].parse()?;
            let mut values = Vec::new();
            for i in 0..t_columns.len() {
                let (m, s) = (&rec[3 + 2 * i], &rec[4 + 2 * i]);
                values.push(if m.is_empty() {
                    None
                } else {
                    Some((m.parse().map_err(|_| bad(m))?, s.parse().map_err(|_| bad(s))?))
                });
            }
            rows.push(SensitivityRow { p, estimator, values });
        }
        Ok(SensitivityTable { sample_size, t_columns, rows })
    }
}

impl fmt::Display for SensitivityTable {
    /// Fixed-width text layout: one row per (p, method), `mean±std` cells.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<4} {:<12}", "p", "Method")?;
        for t in &self.t_columns {
            write!(f, " {:>15}", format!("time-step-{t}"))?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(f, "{:<4} {:<12}", r.p, label(r.estimator))?;
            for v in &r.values {
                let cell = v.map_or("n/a".to_string(), |(m, s)| format!("{m:.3}±{s:.3}"));
                write!(f, " {cell:>15}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
