//! Stage functions shared by the CLI subcommands, and the resumable pipeline.
//!
//! Every stage reads its inputs from disk and writes its outputs under the
//! run directory, so any stage can be resumed from persisted intermediates.
//! `manifest.json` records, per stage, a fingerprint of its parameters and
//! input checksums together with the checksum of each output. A stage is
//! skipped when its fingerprint is unchanged and its outputs still match.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::court::{
    build_count_matrix, parse_grid_header, read_shots_csv, split_holdout, write_shots_csv, CountMatrix, CourtGrid,
};
use crate::efficiency::{adjust_weights, efficiency_surface, fit_efficiency, observed_shots, EfficiencyConfig};
use crate::error::{Error, Result};
use crate::eval::{run_comparison, ComparisonConfig, EvalInput, FittedModel, ModelKind};
use crate::kernel::build_cov_factor;
use crate::lgcp::{fit_players, LgcpConfig};
use crate::nmf::{fit_nmf, FactorModel, IntensityMatrix, Loss, NmfConfig, NmfInput};
use crate::persist::{ensure_dir, read_matrix, sha256_bytes, sha256_file, write_matrix, write_text, write_vector};
use crate::render::render_heatmap;

/// Artifact names, relative to the run directory.
pub mod paths {
    pub const MANIFEST: &str = "manifest.json";
    pub const SHOTS: &str = "ingest/shots.csv";
    pub const COUNTS: &str = "ingest/counts.csv";
    pub const TRAIN: &str = "split/train.csv";
    pub const TEST: &str = "split/test.csv";
    pub const TRAIN_COUNTS: &str = "split/train_counts.csv";
    pub const TEST_COUNTS: &str = "split/test_counts.csv";
    pub const LGCP_SURFACES: &str = "lgcp/surfaces.csv";
    pub const LGCP_SIDECAR: &str = "lgcp/fit.json";
    pub const NORMALIZED: &str = "normalize/surfaces.csv";
    pub const VOLUMES: &str = "normalize/volumes.csv";
    pub const EFFICIENCY: &str = "efficiency";
    pub const EVALUATE: &str = "evaluate";
    pub const RENDER: &str = "render";

    pub fn nmf_dir(k: usize) -> String {
        format!("nmf/k{k}")
    }
}

pub const STAGES: [&str; 8] = [
    "ingest",
    "split",
    "lgcp",
    "normalize",
    "nmf",
    "efficiency",
    "evaluate",
    "render",
];

fn grid_comment(grid: &CourtGrid) -> String {
    grid.to_string()
}

fn grid_from_comments(path: &Path, comments: &[String]) -> Result<CourtGrid> {
    comments
        .iter()
        .find_map(|c| parse_grid_header(&format!("# {c}")))
        .ok_or_else(|| Error::parse(path, "missing `# grid` comment"))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

/// Per-player surfaces with their grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTable {
    pub grid: CourtGrid,
    pub players: Vec<String>,
    pub data: DMatrix<f64>,
}

impl SurfaceTable {
    pub fn read(path: &Path) -> Result<Self> {
        let m = read_matrix(path)?;
        let grid = grid_from_comments(path, &m.comments)?;
        if m.data.ncols() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} tiles", grid.len()),
                found: format!("{} columns in {}", m.data.ncols(), path.display()),
            });
        }
        Ok(SurfaceTable {
            grid,
            players: m.labels,
            data: m.data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        parent_dir(path)?;
        write_matrix(path, &[grid_comment(&self.grid)], &self.players, &self.data)
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.data.row(n).iter().copied().collect()
    }
}

/// Read shots, keep players with enough attempts, write their shots and counts.
pub fn ingest(shots: &Path, grid: CourtGrid, min_attempts: usize, out_shots: &Path, out_counts: &Path) -> Result<CountMatrix> {
    let all = read_shots_csv(shots, &grid)?;
    let counts = build_count_matrix(&all, grid, min_attempts)?;
    let keep: std::collections::HashSet<&str> = counts.players.iter().map(String::as_str).collect();
    let kept: Vec<_> = all.into_iter().filter(|s| keep.contains(s.player.as_str())).collect();
    parent_dir(out_shots)?;
    parent_dir(out_counts)?;
    write_shots_csv(out_shots, &kept)?;
    counts.write_csv(out_counts)?;
    Ok(counts)
}

/// Per-player holdout split of an ingested shot file.
pub fn split(shots: &Path, counts: &Path, fraction: f64, seed: u64, out_dir: &Path) -> Result<()> {
    let players = CountMatrix::read_csv(counts)?;
    let grid = players.grid;
    let all = read_shots_csv(shots, &grid)?;
    let s = split_holdout(&all, fraction, seed)?;
    ensure_dir(out_dir)?;
    write_shots_csv(&out_dir.join("train.csv"), &s.train)?;
    write_shots_csv(&out_dir.join("test.csv"), &s.test)?;
    CountMatrix::for_players(&s.train, grid, &players.players)?.write_csv(&out_dir.join("train_counts.csv"))?;
    CountMatrix::for_players(&s.test, grid, &players.players)?.write_csv(&out_dir.join("test_counts.csv"))
}

/// Sidecar written next to fitted LGCP surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgcpSidecar {
    pub config: LgcpConfig,
    pub jitter: f64,
    pub factor_jitter: f64,
    pub seed: u64,
    pub players: Vec<String>,
    pub volumes: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean_proposals: Vec<f64>,
}

/// Fit an independent LGCP to every row of a count file.
pub fn fit_lgcp_file(counts: &Path, config: &LgcpConfig, jitter: f64, out_surfaces: &Path, out_sidecar: &Path) -> Result<()> {
    let x = CountMatrix::read_csv(counts)?;
    let factor = build_cov_factor(&x.grid, &config.kernel, jitter)?;
    let fits = fit_players(&x, &factor, config)?;
    let data = DMatrix::from_fn(x.n_players(), x.n_tiles(), |n, v| fits[n].surface.values[v]);
    SurfaceTable {
        grid: x.grid,
        players: x.players.clone(),
        data,
    }
    .write(out_surfaces)?;
    let sidecar = LgcpSidecar {
        config: config.clone(),
        jitter,
        factor_jitter: factor.jitter(),
        seed: config.seed,
        players: x.players.clone(),
        volumes: fits.iter().map(|f| f.surface.volume()).collect(),
        bias: fits.iter().map(|f| f.bias).collect(),
        mean_proposals: fits.iter().map(|f| f.mean_proposals).collect(),
    };
    parent_dir(out_sidecar)?;
    write_text(out_sidecar, &(serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n"))
}

/// Rescale every surface to unit volume and record the original volumes.
pub fn normalize_file(surfaces: &Path, out_surfaces: &Path, out_volumes: &Path) -> Result<IntensityMatrix> {
    let t = SurfaceTable::read(surfaces)?;
    let area = t.grid.tile_area();
    let mut data = t.data.clone();
    let mut volumes = Vec::with_capacity(t.players.len());
    for (n, mut row) in data.row_iter_mut().enumerate() {
        let vol = row.sum() * area;
        if !(vol > 0.0 && vol.is_finite()) {
            return Err(Error::InvalidParameter(format!("surface of {} has volume {vol}", t.players[n])));
        }
        row /= vol;
        volumes.push(vol);
    }
    let normalized = SurfaceTable {
        grid: t.grid,
        players: t.players.clone(),
        data,
    };
    normalized.write(out_surfaces)?;
    parent_dir(out_volumes)?;
    write_vector(out_volumes, &[], &t.players, &volumes)?;
    IntensityMatrix::new(t.grid, t.players, normalized.data)
}

pub fn read_volumes(path: &Path) -> Result<Vec<f64>> {
    Ok(read_matrix(path)?.data.column(0).iter().copied().collect())
}

/// Text manifest stored next to `W.csv` and `B.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorManifest {
    pub loss: Loss,
    pub k: usize,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
    pub seed: u64,
}

pub fn save_factor_model(dir: &Path, model: &FactorModel, players: &[String], grid: &CourtGrid, seed: u64) -> Result<()> {
    ensure_dir(dir)?;
    let basis_labels: Vec<String> = (0..model.rank()).map(|k| format!("basis{k}")).collect();
    write_matrix(&dir.join("W.csv"), &[], players, &model.weights)?;
    write_matrix(&dir.join("B.csv"), &[grid_comment(grid)], &basis_labels, &model.bases)?;
    let m = FactorManifest {
        loss: model.loss,
        k: model.rank(),
        final_loss: model.final_loss,
        iterations: model.iterations,
        converged: model.converged,
        restart: model.restart,
        seed,
    };
    write_text(&dir.join("manifest.txt"), &toml::to_string(&m).expect("manifest serializes"))
}

/// Players, grid and model saved by [`save_factor_model`]. The loss trace is not persisted.
pub fn load_factor_model(dir: &Path) -> Result<(Vec<String>, CourtGrid, FactorModel)> {
    let w = read_matrix(&dir.join("W.csv"))?;
    let b_path = dir.join("B.csv");
    let b = read_matrix(&b_path)?;
    let grid = grid_from_comments(&b_path, &b.comments)?;
    let m_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&m_path).map_err(|e| Error::io(&m_path, e))?;
    let m: FactorManifest = toml::from_str(&text).map_err(|e| Error::parse(&m_path, e.to_string()))?;
    if w.data.ncols() != b.data.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("W with {} columns", b.data.nrows()),
            found: format!("{} columns", w.data.ncols()),
        });
    }
    let model = FactorModel {
        weights: w.data,
        bases: b.data,
        loss: m.loss,
        final_loss: m.final_loss,
        trace: Vec::new(),
        iterations: m.iterations,
        converged: m.converged,
        restart: m.restart,
    };
    Ok((w.labels, grid, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorInput {
    /// Fitted LGCP surfaces, rescaled to unit volume on load.
    Lgcp,
    /// Raw count matrix.
    Counts,
}

/// Factorize a surface or count file and save the model under `out_dir`.
pub fn factorize_file(input: FactorInput, path: &Path, k: usize, loss: Loss, config: &NmfConfig, out_dir: &Path) -> Result<FactorModel> {
    let (players, grid, model) = match input {
        FactorInput::Lgcp => {
            let t = SurfaceTable::read(path)?;
            let area = t.grid.tile_area();
            let mut data = t.data;
            for mut row in data.row_iter_mut() {
                let vol = row.sum() * area;
                row /= vol;
            }
            let m = IntensityMatrix::new(t.grid, t.players, data)?;
            let model = fit_nmf(NmfInput::Intensity(&m), k, loss, config)?;
            (m.players, m.grid, model)
        }
        FactorInput::Counts => {
            let x = CountMatrix::read_csv(path)?;
            let model = fit_nmf(NmfInput::Counts(&x), k, loss, config)?;
            (x.players, x.grid, model)
        }
    };
    save_factor_model(out_dir, &model, &players, &grid, config.seed)?;
    Ok(model)
}

/// Fit the efficiency model to a shot file using saved loadings; writes
/// posterior means, traces and per-player surfaces under `out_dir`.
pub fn fit_efficiency_files(shots: &Path, factor_dir: &Path, config: &EfficiencyConfig, out_dir: &Path) -> Result<()> {
    let (players, grid, model) = load_factor_model(factor_dir)?;
    let loadings = adjust_weights(&model);
    let shots = read_shots_csv(shots, &grid)?;
    let known: std::collections::HashSet<&str> = players.iter().map(String::as_str).collect();
    let shots: Vec<_> = shots.into_iter().filter(|s| known.contains(s.player.as_str())).collect();
    let observed = observed_shots(&shots, &players, &grid)?;
    let fit = fit_efficiency(&observed, &loadings, config)?;
    ensure_dir(out_dir)?;

    let k = loadings.n_bases();
    let basis_labels: Vec<String> = loadings.kept.iter().map(|k| format!("basis{k}")).collect();
    let header = format!("columns {}", basis_labels.join(" "));
    let pm = &fit.posterior_mean;
    write_matrix(&out_dir.join("beta.csv"), std::slice::from_ref(&header), &players, &pm.beta)?;
    let globals = DMatrix::from_fn(2, k, |r, j| if r == 0 { pm.beta0[j] } else { pm.sigma2[j] });
    write_matrix(
        &out_dir.join("global.csv"),
        std::slice::from_ref(&header),
        &["beta0".to_string(), "sigma2".to_string()],
        &globals,
    )?;
    let mut acc_labels = players.clone();
    acc_labels.push("global".into());
    let acc = DMatrix::from_fn(players.len() + 1, k, |n, j| {
        if n < players.len() {
            fit.accuracy_mean[(n, j)]
        } else {
            fit.global_accuracy_mean[j]
        }
    });
    write_matrix(&out_dir.join("accuracy.csv"), std::slice::from_ref(&header), &acc_labels, &acc)?;
    write_matrix(&out_dir.join("type_counts.csv"), std::slice::from_ref(&header), &players, &fit.type_counts)?;
    let trace = DMatrix::from_fn(fit.sigma2_trace.len(), k, |s, j| fit.sigma2_trace[s][j]);
    let sweep_labels: Vec<String> = (0..trace.nrows()).map(|s| s.to_string()).collect();
    write_matrix(&out_dir.join("sigma2_trace.csv"), &[header], &sweep_labels, &trace)?;

    let mut player_surfaces = DMatrix::zeros(players.len(), grid.len());
    let mut global_surfaces = DMatrix::zeros(players.len(), grid.len());
    for n in 0..players.len() {
        let s = efficiency_surface(n, &grid, &loadings, pm)?;
        player_surfaces.row_mut(n).copy_from_slice(&s.player);
        global_surfaces.row_mut(n).copy_from_slice(&s.global);
    }
    SurfaceTable {
        grid,
        players: players.clone(),
        data: player_surfaces,
    }
    .write(&out_dir.join("surfaces.csv"))?;
    SurfaceTable {
        grid,
        players,
        data: global_surfaces,
    }
    .write(&out_dir.join("global_surfaces.csv"))
}

/// Inputs of the held-out comparison, as files.
#[derive(Debug, Clone)]
pub struct EvaluateFiles {
    pub train_counts: PathBuf,
    pub test_counts: PathBuf,
    /// Unit-volume surfaces fit to the train split.
    pub surfaces: PathBuf,
    pub volumes: PathBuf,
    /// Saved factor models to reuse, with their kind.
    pub factor_dirs: Vec<(ModelKind, PathBuf)>,
    pub truth_bases: Option<PathBuf>,
}

pub fn evaluate_files(files: &EvaluateFiles, fraction: f64, config: &ComparisonConfig, out_dir: &Path) -> Result<crate::eval::EvalReport> {
    let train = CountMatrix::read_csv(&files.train_counts)?;
    let test = CountMatrix::read_csv(&files.test_counts)?;
    let t = SurfaceTable::read(&files.surfaces)?;
    let surfaces = IntensityMatrix::new(t.grid, t.players, t.data)?;
    let volumes = read_volumes(&files.volumes)?;
    let truth = match &files.truth_bases {
        Some(p) => Some(read_matrix(p)?.data),
        None => None,
    };
    let mut precomputed = Vec::new();
    for (kind, dir) in &files.factor_dirs {
        let (_, _, model) = load_factor_model(dir)?;
        precomputed.push(FittedModel {
            kind: *kind,
            k: model.rank(),
            model,
        });
    }
    let input = EvalInput {
        train: &train,
        test: &test,
        surfaces: &surfaces,
        volumes: &volumes,
        fraction,
        truth: truth.as_ref(),
    };
    let (report, _) = run_comparison(&input, config, &precomputed)?;
    ensure_dir(out_dir)?;
    report.write(out_dir)?;
    Ok(report)
}

/// Render every row of a surface file (or just `rows`) to `{prefix}{label}.pgm`.
pub fn render_file(surfaces: &Path, rows: Option<&[String]>, out_dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let t = SurfaceTable::read(surfaces)?;
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    for (n, label) in t.players.iter().enumerate() {
        if rows.is_some_and(|r| !r.contains(label)) {
            continue;
        }
        let path = out_dir.join(format!("{prefix}{label}.pgm"));
        render_heatmap(&t.row(n), &t.grid, &path)?;
        written.push(path);
    }
    if let Some(r) = rows {
        if let Some(missing) = r.iter().find(|l| !t.players.contains(l)) {
            return Err(Error::UnknownPlayer(missing.clone()));
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StageRecord {
    name: String,
    fingerprint: String,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: PipelineConfig,
    seed: u64,
    stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
    /// Re-executed because a recorded output was missing or changed.
    Repaired { file: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub out: PathBuf,
    pub stages: Vec<(&'static str, StageStatus)>,
}

impl PipelineReport {
    pub fn status(&self, stage: &str) -> Option<&StageStatus> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, st)| st)
    }
}

struct Runner {
    out: PathBuf,
    previous: Vec<StageRecord>,
    manifest: Manifest,
    statuses: Vec<(&'static str, StageStatus)>,
}

impl Runner {
    fn new(config: &PipelineConfig) -> Result<Self> {
        let out = config.paths.out.clone();
        ensure_dir(&out)?;
        let previous = std::fs::read_to_string(out.join(paths::MANIFEST))
            .ok()
            .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
            .map(|m| m.stages)
            .unwrap_or_default();
        Ok(Runner {
            out,
            previous,
            manifest: Manifest {
                config: config.clone(),
                seed: config.seed,
                stages: Vec::new(),
            },
            statuses: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Checksums of named inputs; names, not locations, enter the fingerprint.
    fn fingerprint(&self, name: &str, params: serde_json::Value, inputs: &[(&str, PathBuf)]) -> Result<String> {
        let mut sums = BTreeMap::new();
        for (label, path) in inputs {
            sums.insert(label.to_string(), sha256_file(path)?);
        }
        let doc = json!({ "stage": name, "params": params, "inputs": sums });
        Ok(sha256_bytes(doc.to_string().as_bytes()))
    }

    fn check_outputs(&self, record: &StageRecord) -> std::result::Result<(), String> {
        for (rel, sum) in &record.outputs {
            match sha256_file(&self.path(rel)) {
                Ok(s) if &s == sum => {}
                _ => return Err(rel.clone()),
            }
        }
        Ok(())
    }

    fn stage(
        &mut self,
        name: &'static str,
        params: serde_json::Value,
        inputs: &[(&str, PathBuf)],
        body: impl FnOnce(&Path) -> Result<Vec<String>>,
    ) -> Result<()> {
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let fingerprint = self.fingerprint(name, params, inputs).map_err(wrap)?;
        let previous = self.previous.iter().find(|r| r.name == name && r.fingerprint == fingerprint);
        let mut status = StageStatus::Ran;
        if let Some(record) = previous {
            match self.check_outputs(record) {
                Ok(()) => {
                    log::info!("stage {name}: up to date, skipping");
                    self.manifest.stages.push(record.clone());
                    self.statuses.push((name, StageStatus::Skipped));
                    return self.write_manifest();
                }
                Err(file) => {
                    log::warn!("stage {name}: checksum mismatch on {file}, re-running");
                    status = StageStatus::Repaired { file };
                }
            }
        }
        log::info!("stage {name}: running");
        let outputs = body(&self.out).map_err(wrap)?;
        let mut sums = BTreeMap::new();
        for rel in outputs {
            let sum = sha256_file(&self.path(&rel)).map_err(wrap)?;
            sums.insert(rel, sum);
        }
        self.manifest.stages.push(StageRecord {
            name: name.to_string(),
            fingerprint,
            outputs: sums,
        });
        self.statuses.push((name, status));
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        write_text(&self.path(paths::MANIFEST), &text)
    }
}

fn listed(dir: &str, names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("{dir}/{n}")).collect()
}

/// Run every stage, skipping those whose inputs and outputs are unchanged.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let grid = config.grid.grid()?;
    let mut r = Runner::new(config)?;
    let seed = config.seed;

    let shots = config.paths.shots.clone();
    r.stage(
        "ingest",
        json!({ "grid": grid, "min_attempts": config.data.min_attempts }),
        &[("shots", shots.clone())],
        |out| {
            ingest(&shots, grid, config.data.min_attempts, &out.join(paths::SHOTS), &out.join(paths::COUNTS))?;
            Ok(vec![paths::SHOTS.into(), paths::COUNTS.into()])
        },
    )?;

    let fraction = config.data.holdout_fraction;
    r.stage(
        "split",
        json!({ "fraction": fraction, "seed": seed }),
        &[("shots", r.path(paths::SHOTS)), ("counts", r.path(paths::COUNTS))],
        |out| {
            split(&out.join(paths::SHOTS), &out.join(paths::COUNTS), fraction, seed, &out.join("split"))?;
            Ok(vec![
                paths::TRAIN.into(),
                paths::TEST.into(),
                paths::TRAIN_COUNTS.into(),
                paths::TEST_COUNTS.into(),
            ])
        },
    )?;

    let lgcp = config.lgcp_config();
    let jitter = config.kernel.jitter();
    r.stage(
        "lgcp",
        json!({ "lgcp": lgcp, "jitter": jitter }),
        &[("train_counts", r.path(paths::TRAIN_COUNTS))],
        |out| {
            fit_lgcp_file(
                &out.join(paths::TRAIN_COUNTS),
                &lgcp,
                jitter,
                &out.join(paths::LGCP_SURFACES),
                &out.join(paths::LGCP_SIDECAR),
            )?;
            Ok(vec![paths::LGCP_SURFACES.into(), paths::LGCP_SIDECAR.into()])
        },
    )?;

    r.stage(
        "normalize",
        json!({}),
        &[("surfaces", r.path(paths::LGCP_SURFACES))],
        |out| {
            normalize_file(&out.join(paths::LGCP_SURFACES), &out.join(paths::NORMALIZED), &out.join(paths::VOLUMES))?;
            Ok(vec![paths::NORMALIZED.into(), paths::VOLUMES.into()])
        },
    )?;

    let nmf = config.nmf_config();
    let loss = config.nmf.loss;
    let ks = config.nmf.ks.clone();
    r.stage(
        "nmf",
        json!({ "nmf": nmf, "loss": loss, "ks": ks }),
        &[("surfaces", r.path(paths::NORMALIZED))],
        |out| {
            let mut written = Vec::new();
            for &k in &ks {
                let dir = paths::nmf_dir(k);
                factorize_file(FactorInput::Lgcp, &out.join(paths::NORMALIZED), k, loss, &nmf, &out.join(&dir))?;
                written.extend(listed(&dir, &["W.csv", "B.csv", "manifest.txt"]));
            }
            Ok(written)
        },
    )?;

    let eff = config.efficiency_config();
    let eff_dir = paths::nmf_dir(config.efficiency.k);
    let eff_outputs = [
        "beta.csv",
        "global.csv",
        "accuracy.csv",
        "type_counts.csv",
        "sigma2_trace.csv",
        "surfaces.csv",
        "global_surfaces.csv",
    ];
    r.stage(
        "efficiency",
        json!({ "efficiency": eff, "k": config.efficiency.k }),
        &[
            ("train", r.path(paths::TRAIN)),
            ("W", r.path(&format!("{eff_dir}/W.csv"))),
            ("B", r.path(&format!("{eff_dir}/B.csv"))),
            ("manifest", r.path(&format!("{eff_dir}/manifest.txt"))),
        ],
        |out| {
            fit_efficiency_files(&out.join(paths::TRAIN), &out.join(&eff_dir), &eff, &out.join(paths::EFFICIENCY))?;
            Ok(listed(paths::EFFICIENCY, &eff_outputs))
        },
    )?;

    let comparison = ComparisonConfig {
        ks: config.nmf.ks.clone(),
        models: config.nmf.models.clone(),
        nmf: nmf.clone(),
    };
    let reused = match loss {
        Loss::Kl => ModelKind::NmfKl,
        Loss::Frobenius => ModelKind::NmfFrobenius,
    };
    let mut eval_inputs: Vec<(&str, PathBuf)> = vec![
        ("train_counts", r.path(paths::TRAIN_COUNTS)),
        ("test_counts", r.path(paths::TEST_COUNTS)),
        ("surfaces", r.path(paths::NORMALIZED)),
        ("volumes", r.path(paths::VOLUMES)),
    ];
    let w_labels: Vec<String> = config.nmf.ks.iter().map(|k| format!("W{k}")).collect();
    let b_labels: Vec<String> = config.nmf.ks.iter().map(|k| format!("B{k}")).collect();
    for (i, &k) in config.nmf.ks.iter().enumerate() {
        eval_inputs.push((&w_labels[i], r.path(&format!("{}/W.csv", paths::nmf_dir(k)))));
        eval_inputs.push((&b_labels[i], r.path(&format!("{}/B.csv", paths::nmf_dir(k)))));
    }
    if let Some(t) = &config.paths.truth_bases {
        eval_inputs.push(("truth", t.clone()));
    }
    r.stage(
        "evaluate",
        json!({ "comparison": comparison, "fraction": fraction, "reused": reused }),
        &eval_inputs,
        |out| {
            let files = EvaluateFiles {
                train_counts: out.join(paths::TRAIN_COUNTS),
                test_counts: out.join(paths::TEST_COUNTS),
                surfaces: out.join(paths::NORMALIZED),
                volumes: out.join(paths::VOLUMES),
                factor_dirs: config
                    .nmf
                    .ks
                    .iter()
                    .map(|&k| (reused, out.join(paths::nmf_dir(k))))
                    .collect(),
                truth_bases: config.paths.truth_bases.clone(),
            };
            evaluate_files(&files, fraction, &comparison, &out.join(paths::EVALUATE))?;
            Ok(listed(
                paths::EVALUATE,
                &["eval_report.csv", "eval_per_player.csv", "eval_summary.txt"],
            ))
        },
    )?;

    let render_players = config.render.players;
    r.stage(
        "render",
        json!({ "players": render_players, "k": config.efficiency.k }),
        &[
            ("surfaces", r.path(paths::NORMALIZED)),
            ("B", r.path(&format!("{eff_dir}/B.csv"))),
            ("efficiency", r.path(&format!("{}/surfaces.csv", paths::EFFICIENCY))),
            ("global", r.path(&format!("{}/global_surfaces.csv", paths::EFFICIENCY))),
        ],
        |out| {
            let dir = out.join(paths::RENDER);
            let players = SurfaceTable::read(&out.join(paths::NORMALIZED))?.players;
            let chosen: Vec<String> = players.into_iter().take(render_players).collect();
            let mut written = render_file(&out.join(format!("{eff_dir}/B.csv")), None, &dir, "")?;
            written.extend(render_file(&out.join(paths::NORMALIZED), Some(&chosen), &dir, "lgcp_")?);
            let eff = out.join(paths::EFFICIENCY);
            written.extend(render_file(&eff.join("surfaces.csv"), Some(&chosen), &dir, "efficiency_")?);
            written.extend(render_file(&eff.join("global_surfaces.csv"), Some(&chosen), &dir, "global_")?);
            Ok(written
                .iter()
                .map(|p| format!("{}/{}", paths::RENDER, p.file_name().unwrap().to_string_lossy()))
                .collect())
        },
    )?;

    Ok(PipelineReport {
        out: r.out.clone(),
        stages: r.statuses,
    })
}
