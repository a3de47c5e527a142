//! Long-format CSV panels: loading with a column schema, and export.
//!
//! One row per individual and time. A row carries the covariates and
//! treatment of that time and the outcome observed at that time. Because an
//! outcome follows its treatment, the stored outcome at step `t` is the raw
//! outcome of time `t + 1`: a file with `T + 1` time points yields a panel
//! of `T` steps. The first time point needs no outcome and the last needs no
//! covariates or treatment.

mod case_study;
mod schema;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use case_study::{case_study_run, CaseStudyOutput, TreatmentStudy};
pub use schema::{Binarization, PanelSchema};

use crate::error::{Error, Result};
use crate::panel::TrajectoryPanel;

/// How a treatment column was binarized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarizationSummary {
    pub mode: Binarization,
    /// Cut point used (`value > threshold` means treated).
    pub threshold: Option<f64>,
    /// Share of treated entries in the loaded panel.
    pub treated_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
    pub individuals: usize,
    /// Individuals removed because their time grid was incomplete.
    pub individuals_dropped: usize,
    pub t_steps: usize,
    /// Missing-value count per required column.
    pub missing: BTreeMap<String, usize>,
    pub treatment: String,
    pub binarization: BinarizationSummary,
}

const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "null"];

struct Row {
    id: String,
    time: i64,
    treatment: Option<f64>,
    outcome: Option<f64>,
    covariates: Vec<Option<f64>>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if MISSING_TOKENS.contains(&s) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::UnparseableValue { row, column: column.to_string(), value: raw.to_string() }),
    }
}

/// Orders ids numerically when every id is an integer, else lexicographically.
fn sort_ids(ids: &mut [String]) {
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Loads a panel whose treatment is the schema's first treatment column.
///
/// Rows are grouped by individual and sorted by time, so the result does not
/// depend on row order. A row missing a required field is dropped; an
/// individual whose remaining times do not cover the full grid is dropped
/// entirely. Both are counted in the report.
pub fn load_panel(path: &Path, schema: &PanelSchema) -> Result<(TrajectoryPanel, IngestReport)> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_panel_from_reader(file, schema)
}

pub fn load_panel_from_reader<R: std::io::Read>(
    reader: R,
    schema: &PanelSchema,
) -> Result<(TrajectoryPanel, IngestReport)> {
    schema.validate()?;
    let treatment_name = schema.treatment_columns[0].clone();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_idx = schema.id_column.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let time_idx = column_index(&headers, &schema.time_column)?;
    let treat_idx = column_index(&headers, &treatment_name)?;
    let out_idx = column_index(&headers, &schema.outcome_column)?;
    let cov_idx: Vec<usize> =
        schema.covariate_columns.iter().map(|c| column_index(&headers, c)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        let get = |i: usize| record.get(i).unwrap_or("");
        let id = id_idx.map_or_else(String::new, |i| get(i).to_string());
        let time_raw = get(time_idx);
        let time = time_raw.trim().parse::<i64>().map_err(|_| Error::UnparseableValue {
            row: row_no,
            column: schema.time_column.clone(),
            value: time_raw.to_string(),
        })?;
        rows.push(Row {
            id,
            time,
            treatment: parse_cell(get(treat_idx), row_no, &treatment_name)?,
            outcome: parse_cell(get(out_idx), row_no, &schema.outcome_column)?,
            covariates: cov_idx
                .iter()
                .zip(&schema.covariate_columns)
                .map(|(&i, name)| parse_cell(get(i), row_no, name))
                .collect::<Result<_>>()?,
        });
    }
    let rows_read = rows.len();
    if rows_read == 0 {
        return Err(Error::AllMissingColumn(schema.outcome_column.clone()));
    }

    let t_min = rows.iter().map(|r| r.time).min().unwrap();
    let t_max = rows.iter().map(|r| r.time).max().unwrap();
    if t_max == t_min {
        return Err(Error::RaggedPanel("a single time point leaves no outcome step".into()));
    }

    // Missing counts cover only cells a row is required to carry.
    let mut missing: BTreeMap<String, usize> = BTreeMap::new();
    let mut required: BTreeMap<String, usize> = BTreeMap::new();
    let mut count = |name: &str, needed: bool, absent: bool| {
        *required.entry(name.to_string()).or_insert(0) += usize::from(needed);
        *missing.entry(name.to_string()).or_insert(0) += usize::from(needed && absent);
    };
    for row in &rows {
        let needs_inputs = row.time != t_max;
        count(&treatment_name, needs_inputs, row.treatment.is_none());
        count(&schema.outcome_column, row.time != t_min, row.outcome.is_none());
        for (v, name) in row.covariates.iter().zip(&schema.covariate_columns) {
            count(name, needs_inputs, v.is_none());
        }
    }
    if let Some((name, _)) = missing.iter().find(|(name, &m)| m > 0 && m == required[*name]) {
        return Err(Error::AllMissingColumn(name.clone()));
    }

    let mut column_values: Vec<f64> = rows.iter().filter_map(|r| r.treatment).collect();
    let steps = (t_max - t_min) as usize;

    // Drop rows missing a field they are required to carry.
    let complete = |r: &Row| {
        (r.time == t_min || r.outcome.is_some())
            && (r.time == t_max || (r.treatment.is_some() && r.covariates.iter().all(Option::is_some)))
    };
    let before = rows.len();
    rows.retain(complete);
    let dropped_missing = before - rows.len();
    if rows.is_empty() {
        let worst = missing.iter().max_by_key(|(_, &m)| m).map(|(n, _)| n.clone()).unwrap();
        return Err(Error::AllMissingColumn(worst));
    }

    let mut by_id: HashMap<String, Vec<Row>> = HashMap::new();
    for row in rows {
        by_id.entry(row.id.clone()).or_default().push(row);
    }
    let mut ids: Vec<String> = by_id.keys().cloned().collect();
    sort_ids(&mut ids);

    let mut kept: Vec<Vec<Row>> = Vec::new();
    let mut dropped_ragged_rows = 0;
    let mut individuals_dropped = 0;
    for id in ids {
        let mut group = by_id.remove(&id).unwrap();
        group.sort_by_key(|r| r.time);
        if group.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::RaggedPanel(format!("duplicate time in individual `{id}`")));
        }
        let full = group.len() == steps + 1 && group.iter().zip(t_min..).all(|(r, t)| r.time == t);
        if full {
            kept.push(group);
        } else {
            individuals_dropped += 1;
            dropped_ragged_rows += group.len();
        }
    }
    if kept.is_empty() {
        return Err(Error::RaggedPanel(format!(
            "no individual covers every time from {t_min} to {t_max}"
        )));
    }

    let n = kept.len();
    let k = schema.covariate_columns.len();
    let mut x = Vec::with_capacity(n * steps * k);
    let mut w_raw = Vec::with_capacity(n * steps);
    let mut y = Vec::with_capacity(n * steps);
    for group in &kept {
        for s in 0..steps {
            x.extend(group[s].covariates.iter().map(|v| v.unwrap()));
            w_raw.push(group[s].treatment.unwrap());
            y.push(group[s + 1].outcome.unwrap());
        }
    }

    let threshold = match schema.treatment_binarization {
        Binarization::None => None,
        Binarization::Threshold(c) => Some(c),
        Binarization::MedianSplit => Some(median(&mut column_values)),
    };
    let w: Vec<f64> = match threshold {
        Some(c) => w_raw.iter().map(|&v| f64::from(u8::from(v > c))).collect(),
        None => w_raw,
    };
    let treated_fraction = w.iter().sum::<f64>() / w.len() as f64;

    let panel = TrajectoryPanel::new(n, steps, k, x, w, y)?;
    let rows_kept = kept.iter().map(Vec::len).sum::<usize>();
    debug_assert_eq!(rows_kept + dropped_missing + dropped_ragged_rows, rows_read);
    let report = IngestReport {
        rows_read,
        rows_kept,
        rows_dropped: rows_read - rows_kept,
        individuals: n,
        individuals_dropped,
        t_steps: steps,
        missing,
        treatment: treatment_name,
        binarization: BinarizationSummary {
            mode: schema.treatment_binarization,
            threshold,
            treated_fraction,
        },
    };
    Ok((panel, report))
}

/// Writes `panel` as long-format CSV with columns
/// `id, time, treatment, outcome, x1 … xk` and times `1 … T + 1`.
///
/// Loading the file with [`PanelSchema::long_format`] reproduces the panel
/// exactly.
pub fn write_panel_csv(panel: &TrajectoryPanel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["id".to_string(), "time".into(), "treatment".into(), "outcome".into()];
    header.extend((1..=panel.k()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let steps = panel.t_steps();
    for i in 0..panel.n() {
        for time in 1..=steps + 1 {
            let s = time - 1;
            let mut rec = vec![(i + 1).to_string(), time.to_string()];
            if s < steps {
                rec.push(panel.w(i, s).to_string());
            } else {
                rec.push(String::new());
            }
            rec.push(if s >= 1 { panel.y(i, s - 1).to_string() } else { String::new() });
            for j in 0..panel.k() {
                rec.push(if s < steps { panel.x(i, s)[j].to_string() } else { String::new() });
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
