//! Exports a simulated panel to long-format CSV, reloads it through the
//! schema-driven loader, and checks that nothing changed.

use tifm::datagen::{simulate_panel, SimConfig};
use tifm::estimate::{effect_series, EstimateOptions, EstimatorId};
use tifm::ingest::{load_panel, write_panel_csv, PanelSchema};

fn main() -> tifm::Result<()> {
    let sim = simulate_panel(&SimConfig { n_individuals: 500, t_steps: 12, ..SimConfig::default() }, 3)?;
    let dir = std::env::temp_dir().join("tifm-csv-example");
    std::fs::create_dir_all(&dir).map_err(|e| tifm::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("panel.csv");
    write_panel_csv(&sim.observed, &path)?;

    let (reloaded, report) = load_panel(&path, &PanelSchema::long_format(sim.observed.k()))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("identical panel: {}", reloaded == sim.observed);

    let opts = EstimateOptions::default();
    let a = effect_series(&sim.observed, None, EstimatorId::AdjustedOls, &opts)?;
    let b = effect_series(&reloaded, None, EstimatorId::AdjustedOls, &opts)?;
    println!("identical estimates: {}", a == b);
    Ok(())
}
