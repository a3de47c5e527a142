use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_panel, IngestReport, PanelSchema};
use crate::error::{Error, Result};
use crate::estimate::{effect_series, EffectSeries, EstimateOptions, EstimatorId};
use crate::factor::{infer_latents, train, TrainConfig, TrainingCurve};

/// Result for one treatment column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreatmentStudy {
    pub treatment: String,
    pub report: IngestReport,
    pub curve: TrainingCurve,
    pub series: EffectSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyOutput {
    pub schema: PanelSchema,
    pub train_config: TrainConfig,
    pub studies: Vec<TreatmentStudy>,
}

/// For every treatment column of `schema`: loads the panel, trains a factor
/// model on its covariates, infers the instrument and estimates a TSLS
/// effect series over all steps.
pub fn case_study_run(path: &Path, schema: &PanelSchema, train_config: &TrainConfig) -> Result<CaseStudyOutput> {
    schema.validate()?;
    let mut studies = Vec::with_capacity(schema.treatment_columns.len());
    for treatment in &schema.treatment_columns {
        let (panel, report) = load_panel(path, &schema.for_treatment(treatment)?)?;
        if panel.n() < 2 {
            return Err(Error::InvalidConfig(format!(
                "treatment `{treatment}`: need at least 2 individuals, found {}",
                panel.n()
            )));
        }
        let (params, curve) = train(&panel, train_config)?;
        let latents = infer_latents(&params, &panel)?;
        let series = effect_series(&panel, Some(&latents), EstimatorId::Tsls, &EstimateOptions::default())?;
        studies.push(TreatmentStudy { treatment: treatment.clone(), report, curve, series });
    }
    Ok(CaseStudyOutput { schema: schema.clone(), train_config: train_config.clone(), studies })
}

impl CaseStudyOutput {
    /// Writes `series_<treatment>.csv` per treatment plus `ingest_report.json`
    /// and `case_study.json` (the full bundle). Returns the series paths.
    pub fn write_bundle(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for s in &self.studies {
            let safe: String =
                s.treatment.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
            let p = dir.join(format!("series_{safe}.csv"));
            s.series.write_csv(&p)?;
            paths.push(p);
        }
        let reports: BTreeMap<&str, &IngestReport> =
            self.studies.iter().map(|s| (s.treatment.as_str(), &s.report)).collect();
        let report_path = dir.join("ingest_report.json");
        std::fs::write(&report_path, serde_json::to_string_pretty(&reports)? + "\n")
            .map_err(|e| Error::io(&report_path, e))?;
        let bundle_path = dir.join("case_study.json");
        std::fs::write(&bundle_path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&bundle_path, e))?;
        Ok(paths)
    }
}
