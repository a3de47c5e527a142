//! A small replicate grid and its sensitivity table. The desk and paper
//! profiles are the same machinery with larger grids and full training.

use tifm::bench::{run_benchmark, sensitivity_table, BenchSpec};
use tifm::datagen::SimConfig;
use tifm::estimate::EstimatorId;
use tifm::factor::TrainConfig;

fn main() -> tifm::Result<()> {
    let spec = BenchSpec {
        sample_sizes: vec![1000],
        p_orders: vec![1, 3],
        replicates: 3,
        t_report: vec![1, 5, 10],
        estimators: vec![EstimatorId::Naive, EstimatorId::AdjustedOls, EstimatorId::Tsls],
        train_config: TrainConfig { epochs: 5, hidden_units: 32, fc_hidden: Some(32), ..TrainConfig::default() },
        sim: SimConfig { t_steps: 10, ..SimConfig::default() },
        ..BenchSpec::desk()
    };
    let report = run_benchmark(&spec, None)?;
    let table = sensitivity_table(&report, 1000, &spec.p_orders)?;
    print!("{table}");

    let dir = std::env::temp_dir().join("tifm-benchmark-example");
    report.write_files(&dir)?;
    println!("report.json and report.csv in {}", dir.display());
    Ok(())
}
