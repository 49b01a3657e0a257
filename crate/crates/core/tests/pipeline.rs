use courtfactor::config::PipelineConfig;
use courtfactor::pipeline::{run_pipeline, StageStatus, STAGES};
use courtfactor::synth::{generate_dataset, SynthConfig};
use std::path::Path;

fn small_config(root: &Path) -> PipelineConfig {
    generate_dataset(
        &SynthConfig {
            players: 8,
            seed: 12,
            ..SynthConfig::default()
        },
        &root.join("data"),
    )
    .unwrap();
    let mut config = PipelineConfig::with_seed(12);
    config.paths.shots = root.join("data/shots.csv");
    config.paths.out = root.join("run");
    config.lgcp.burn_in = 50;
    config.lgcp.samples = 50;
    config.nmf.ks = vec![2];
    config.efficiency.k = 2;
    config.efficiency.sweeps = 100;
    config.efficiency.burn_in = 20;
    config
}

#[test]
fn rerun_skips_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let first = run_pipeline(&config).unwrap();
    assert!(first.stages.iter().all(|(_, s)| *s == StageStatus::Ran));
    assert_eq!(first.stages.len(), STAGES.len());
    let second = run_pipeline(&config).unwrap();
    assert!(second.stages.iter().all(|(_, s)| *s == StageStatus::Skipped), "{:?}", second.stages);
}

#[test]
fn corrupted_artifact_is_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_pipeline(&config).unwrap();
    let target = config.paths.out.join("lgcp/surfaces.csv");
    let original = std::fs::read(&target).unwrap();
    std::fs::write(&target, b"garbage").unwrap();
    let report = run_pipeline(&config).unwrap();
    assert!(matches!(report.status("lgcp"), Some(StageStatus::Repaired { .. })), "{:?}", report.stages);
    assert_eq!(report.status("ingest"), Some(&StageStatus::Skipped));
    assert_eq!(std::fs::read(&target).unwrap(), original);
}

#[test]
fn changing_a_parameter_reruns_only_downstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    run_pipeline(&config).unwrap();
    config.nmf.ks = vec![2, 3];
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.status("lgcp"), Some(&StageStatus::Skipped));
    assert_eq!(report.status("nmf"), Some(&StageStatus::Ran));
    assert!(config.paths.out.join("nmf/k3/W.csv").exists());
}

#[test]
fn missing_shot_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::with_seed(1);
    config.paths.shots = dir.path().join("absent.csv");
    config.paths.out = dir.path().join("run");
    assert!(run_pipeline(&config).is_err());
}
