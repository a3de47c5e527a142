//! Trains the recurrent factor model on a simulated panel and reports how
//! well the learned instrument tracks the hidden one.
//!
//! cargo run --release --example train_factor_model -- [N] [EPOCHS]

use std::time::Instant;

use tifm::datagen::{simulate_panel, SimConfig};
use tifm::factor::{infer_latents, train, TrainConfig};
use tifm::numkit::pearson;

fn main() -> tifm::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let sim = simulate_panel(&SimConfig { n_individuals: n, master_seed: 1, ..SimConfig::default() }, 0)?;
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let start = Instant::now();
    let (params, curve) = train(&sim.observed, &config)?;
    println!(
        "{epochs} epochs on N = {n} in {:.1}s; loss {:.4} -> {:.4}",
        start.elapsed().as_secs_f64(),
        curve.initial_loss,
        curve.final_loss
    );

    let latents = infer_latents(&params, &sim.observed)?;
    for t in [1, 5, 10, 15, 19] {
        let r = pearson(&latents.column(t, 0), &sim.latent_s_column(t));
        println!("step {:>2}: corr(L, S) = {r:+.3}", t + 1);
    }
    Ok(())
}
