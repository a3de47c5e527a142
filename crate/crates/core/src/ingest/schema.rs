use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a (possibly continuous) treatment column becomes binary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarization {
    /// Use the values as they are.
    None,
    /// `value > median` of the whole column.
    #[default]
    MedianSplit,
    /// `value > threshold`.
    Threshold(f64),
}

/// Maps CSV columns to panel roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    /// Individual identifier. Without it the whole file is one individual.
    #[serde(default)]
    pub id_column: Option<String>,
    pub time_column: String,
    /// One or more treatment columns; each yields its own panel and series.
    pub treatment_columns: Vec<String>,
    pub outcome_column: String,
    pub covariate_columns: Vec<String>,
    #[serde(default)]
    pub treatment_binarization: Binarization,
}

impl PanelSchema {
    /// The layout written by [`super::write_panel_csv`] for `k` covariates,
    /// with treatments used as they are.
    pub fn long_format(k: usize) -> Self {
        Self {
            id_column: Some("id".into()),
            time_column: "time".into(),
            treatment_columns: vec!["treatment".into()],
            outcome_column: "outcome".into(),
            covariate_columns: (1..=k).map(|j| format!("x{j}")).collect(),
            treatment_binarization: Binarization::None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: PanelSchema =
            serde_json::from_str(&text).map_err(|e| Error::InvalidSchema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    /// The same schema restricted to one treatment column.
    pub fn for_treatment(&self, treatment: &str) -> Result<Self> {
        if !self.treatment_columns.iter().any(|t| t == treatment) {
            return Err(Error::InvalidSchema(format!("`{treatment}` is not a treatment column")));
        }
        Ok(Self { treatment_columns: vec![treatment.to_string()], ..self.clone() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_columns.is_empty() {
            return Err(Error::InvalidSchema("covariate_columns must not be empty".into()));
        }
        if self.treatment_columns.is_empty() {
            return Err(Error::InvalidSchema("treatment_columns must not be empty".into()));
        }
        if let Binarization::Threshold(c) = self.treatment_binarization {
            if !c.is_finite() {
                return Err(Error::InvalidSchema("binarization threshold must be finite".into()));
            }
        }
        let mut seen = HashSet::new();
        let names = self
            .id_column
            .iter()
            .chain([&self.time_column, &self.outcome_column])
            .chain(&self.treatment_columns)
            .chain(&self.covariate_columns);
        for name in names {
            if name.trim().is_empty() {
                return Err(Error::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("column `{name}` is used twice")));
            }
        }
        Ok(())
    }
}
