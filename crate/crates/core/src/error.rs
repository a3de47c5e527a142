use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design is rank deficient (smallest singular value {smallest:.3e}, largest {largest:.3e})")]
    RankDeficient { smallest: f64, largest: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("negative scale {0} for a normal draw")]
    NegativeScale(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("treatment is constant across individuals at step {t}")]
    DegenerateTreatment { t: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("ragged panel: {0}")]
    RaggedPanel(String),

    #[error("cannot parse value {value:?} in column `{column}` at data row {row}")]
    UnparseableValue { row: usize, column: String, value: String },

    #[error("column `{0}` has no usable values")]
    AllMissingColumn(String),

    #[error("report has no cell for {0}")]
    MissingCell(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used in the `error_code` column of effect-series CSVs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::RankDeficient { .. } => "rank_deficient",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NegativeScale(_) => "negative_scale",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::DegenerateTreatment { .. } => "degenerate_treatment",
            Error::MissingColumn(_) => "missing_column",
            Error::RaggedPanel(_) => "ragged_panel",
            Error::UnparseableValue { .. } => "unparseable_value",
            Error::AllMissingColumn(_) => "all_missing_column",
            Error::MissingCell(_) => "missing_cell",
            Error::InvalidSchema(_) => "invalid_schema",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
