//! Fit the hierarchical efficiency model on planted loadings and report
//! per-basis accuracy against the planted truth.
//!
//! `cargo run --release --example efficiency_surfaces`

use courtfactor::efficiency::{
    adjust_matrices, efficiency_surface, fit_efficiency, logistic, observed_shots, EfficiencyConfig,
};
use courtfactor::synth::{synthesize, SynthConfig};

fn main() -> courtfactor::Result<()> {
    let data = synthesize(&SynthConfig {
        players: 12,
        shots_min: 400,
        shots_max: 2000,
        seed: 21,
        ..SynthConfig::default()
    })?;
    let t = &data.truth;
    let loadings = adjust_matrices(&t.weights, &t.bases);
    let shots = observed_shots(&data.shots, &t.players, &t.grid)?;
    let fit = fit_efficiency(
        &shots,
        &loadings,
        &EfficiencyConfig {
            sweeps: 800,
            burn_in: 200,
            seed: 21,
            ..EfficiencyConfig::default()
        },
    )?;
    for (k, g) in t.global_logits.iter().enumerate() {
        println!(
            "basis {k}: global accuracy {:.3} (planted {:.3}), sigma^2 {:.4}",
            fit.global_accuracy_mean[k],
            logistic(*g),
            fit.posterior_mean.sigma2[k]
        );
    }
    for n in 0..3 {
        let row: Vec<String> = (0..t.bases.nrows())
            .map(|k| format!("{:.3}/{:.3}", fit.accuracy_mean[(n, k)], logistic(t.logits[(n, k)])))
            .collect();
        println!("{} fitted/planted accuracy: {}", t.players[n], row.join(" "));
    }
    let s = efficiency_surface(0, &t.grid, &loadings, &fit.posterior_mean)?;
    let best = s.player.iter().cloned().fold(f64::MIN, f64::max);
    let worst = s.player.iter().cloned().fold(f64::MAX, f64::min);
    println!("{} make probability ranges {worst:.3}..{best:.3} across the court", t.players[0]);
    Ok(())
}
