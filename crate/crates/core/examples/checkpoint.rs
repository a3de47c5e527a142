//! Saves a trained factor model, reloads it, and infers the instrument on a
//! fresh panel from the same generator.

use tifm::datagen::{simulate_panel, SimConfig};
use tifm::factor::{infer_latents, load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> tifm::Result<()> {
    let config = SimConfig { n_individuals: 400, t_steps: 10, master_seed: 5, ..SimConfig::default() };
    let fit_panel = simulate_panel(&config, 0)?.observed;
    let (params, curve) = train(&fit_panel, &TrainConfig { epochs: 5, hidden_units: 24, fc_hidden: None, ..TrainConfig::default() })?;
    println!("training loss {:.3} -> {:.3}", curve.initial_loss, curve.final_loss);

    let path = std::env::temp_dir().join("tifm-model.json");
    save_checkpoint(&params, &path)?;
    let restored = load_checkpoint(&path)?;
    println!("round trip exact: {} ({})", restored == params, restored.fingerprint());

    // A second replicate with the same settings reuses the fitted standardization.
    let other = simulate_panel(&config, 1)?.observed;
    let latents = infer_latents(&restored, &other)?;
    println!("inferred {} x {} latents, first row {:?}", latents.n, latents.t_steps, &latents.latents[..5]);
    Ok(())
}
