//! Generate a planted synthetic dataset and write it to disk.
//!
//! `cargo run --example synth_dataset -- [out_dir]`

use courtfactor::synth::{generate_dataset, SynthConfig};
use std::path::PathBuf;

fn main() -> courtfactor::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("courtfactor-synth"));
    let config = SynthConfig {
        players: 25,
        seed: 7,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&config, &out)?;
    let made = data.shots.iter().filter(|s| s.made).count();
    println!("wrote {} shots for {} players to {}", data.shots.len(), config.players, out.display());
    println!("overall make rate {:.3}", made as f64 / data.shots.len() as f64);
    for (k, g) in data.truth.global_logits.iter().enumerate() {
        println!("basis {k}: global accuracy {:.3}", courtfactor::efficiency::logistic(*g));
    }
    Ok(())
}
