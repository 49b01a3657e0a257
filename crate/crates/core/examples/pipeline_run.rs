//! End-to-end pipeline on a small synthetic cohort: ingest, split, LGCP,
//! NMF at several K, efficiency model, held-out evaluation and rendering.
//! Rerunning skips every stage whose inputs are unchanged.
//!
//! `cargo run --release --example pipeline_run -- [work_dir]`

use courtfactor::config::PipelineConfig;
use courtfactor::pipeline::run_pipeline;
use courtfactor::synth::{generate_dataset, SynthConfig};
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("courtfactor-pipeline"));
    generate_dataset(
        &SynthConfig {
            players: 20,
            seed: 3,
            ..SynthConfig::default()
        },
        &work.join("data"),
    )?;
    let mut config = PipelineConfig::with_seed(3);
    config.paths.shots = work.join("data/shots.csv");
    config.paths.out = work.join("run");
    config.nmf.ks = vec![2, 4, 6];
    config.efficiency.sweeps = 600;
    config.efficiency.burn_in = 200;

    for pass in ["first", "second"] {
        let report = run_pipeline(&config)?;
        println!("{pass} run:");
        for (stage, status) in &report.stages {
            println!("  {stage:<12} {status:?}");
        }
    }
    let summary = std::fs::read_to_string(config.paths.out.join("evaluate/eval_summary.txt"))?;
    print!("{summary}");
    Ok(())
}
