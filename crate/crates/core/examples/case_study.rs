//! The real-data workflow on a generated stand-in: a long-format CSV with
//! three continuous candidate treatments, median-split binarization, one
//! TSLS effect series per treatment.

use std::fmt::Write as _;

use tifm::factor::TrainConfig;
use tifm::ingest::{case_study_run, Binarization, PanelSchema};
use tifm::numkit::RngStream;

fn main() -> tifm::Result<()> {
    // 60 grid cells observed over 25 months.
    let mut rng = RngStream::new(2024, 0);
    let mut csv = String::from("cell,month,cloud,wind,skin_temp,precip,humidity,pressure\n");
    for cell in 1..=60 {
        let (mut h, mut p) = (rng.standard_normal(), rng.standard_normal());
        for month in 1..=25 {
            h = 0.7 * h + 0.3 * rng.standard_normal();
            p = 0.5 * p + 0.5 * rng.standard_normal();
            let cloud = h + 0.5 * rng.standard_normal();
            let wind = p + 0.5 * rng.standard_normal();
            let temp = 0.3 * h - 0.2 * p + rng.standard_normal();
            let precip = 0.8 * cloud - 0.1 * wind + 0.4 * h + 0.1 * rng.standard_normal();
            writeln!(csv, "{cell},{month},{cloud},{wind},{temp},{precip},{h},{p}").unwrap();
        }
    }
    let dir = std::env::temp_dir().join("tifm-case-study-example");
    std::fs::create_dir_all(&dir).map_err(|e| tifm::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("climate.csv");
    std::fs::write(&path, csv).map_err(|e| tifm::Error::Io { path: path.clone(), source: e })?;

    let schema = PanelSchema {
        id_column: Some("cell".into()),
        time_column: "month".into(),
        treatment_columns: vec!["cloud".into(), "wind".into(), "skin_temp".into()],
        outcome_column: "precip".into(),
        covariate_columns: vec!["humidity".into(), "pressure".into()],
        treatment_binarization: Binarization::MedianSplit,
    };
    let config = TrainConfig { epochs: 10, hidden_units: 16, fc_hidden: Some(16), batch_size: 32, ..TrainConfig::default() };
    let out = case_study_run(&path, &schema, &config)?;
    for files in out.write_bundle(&dir.join("out"))? {
        println!("wrote {}", files.display());
    }
    for study in &out.studies {
        let betas: Vec<String> = study.series.estimates().take(6).map(|e| format!("{:+.2}", e.beta_hat)).collect();
        println!("{:<10} first steps: {}", study.treatment, betas.join(" "));
    }
    Ok(())
}
