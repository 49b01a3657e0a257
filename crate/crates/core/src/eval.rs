//! Held-out predictive evaluation, empirical correlation and basis recovery.

use std::fmt::{self, Write as _};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::court::CountMatrix;
use crate::error::{Error, Result};
use crate::lgcp::IntensitySurface;
use crate::nmf::{fit_nmf, FactorModel, IntensityMatrix, Loss, NmfConfig, NmfInput};
use crate::pca::fit_pca;
use crate::persist::write_text;
use crate::synth::cosine;

/// Floor applied to held-out intensities and clamped PCA reconstructions.
pub const INTENSITY_FLOOR: f64 = 1e-12;

/// Poisson log-likelihood of held-out counts under `surface` rescaled to the
/// expected test mass `train_volume * f / (1 - f)`.
pub fn heldout_loglik(test: &[u32], surface: &IntensitySurface, train_volume: f64, fraction: f64) -> f64 {
    heldout_loglik_values(test, &surface.values, surface.grid.tile_area(), train_volume, fraction)
}

fn heldout_loglik_values(test: &[u32], values: &[f64], area: f64, train_volume: f64, fraction: f64) -> f64 {
    let scale = train_volume * fraction / (1.0 - fraction);
    test.iter()
        .zip(values)
        .map(|(&c, &v)| {
            let mu = (v * scale).max(INTENSITY_FLOOR) * area;
            let c = c as f64;
            let term = if c > 0.0 { c * mu.ln() - ln_factorial(c as u64) } else { 0.0 };
            term - mu
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub values: Vec<f64>,
    /// Tiles whose column is constant across players; their value is 0.
    pub constant: Vec<bool>,
}

/// Pearson correlation across players between tile `anchor` and every tile.
pub fn empirical_correlation(counts: &CountMatrix, anchor: usize) -> Result<Correlation> {
    let (n, v) = (counts.n_players(), counts.n_tiles());
    if n < 3 {
        return Err(Error::InvalidParameter(format!("correlation needs at least 3 players, got {n}")));
    }
    if anchor >= v {
        return Err(Error::IndexOutOfRange { index: anchor, len: v });
    }
    let x = counts.to_matrix();
    let centered: Vec<Vec<f64>> = (0..v)
        .map(|t| {
            let col = x.column(t);
            let mean = col.mean();
            col.iter().map(|c| c - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|d| d * d).sum::<f64>().sqrt()).collect();
    let constant: Vec<bool> = norms.iter().map(|&s| s == 0.0).collect();
    let a = &centered[anchor];
    let values = (0..v)
        .map(|t| {
            if constant[t] || constant[anchor] {
                return 0.0;
            }
            let dot: f64 = a.iter().zip(&centered[t]).map(|(p, q)| p * q).sum();
            (dot / (norms[anchor] * norms[t])).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(Correlation { values, constant })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub estimated: usize,
    pub truth: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub mean: f64,
    /// One pair per true basis, ordered by true index.
    pub pairs: Vec<MatchedPair>,
}

/// Greedy maximum-cosine assignment of estimated rows to true rows.
pub fn basis_recovery_score(estimated: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<RecoveryScore> {
    if estimated.ncols() != truth.ncols() || estimated.nrows() < truth.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {} rows of {} tiles", truth.nrows(), truth.ncols()),
            found: format!("{} x {}", estimated.nrows(), estimated.ncols()),
        });
    }
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    let (est, tru) = (rows(estimated), rows(truth));
    let mut sims = Vec::with_capacity(est.len() * tru.len());
    for (i, e) in est.iter().enumerate() {
        for (j, t) in tru.iter().enumerate() {
            sims.push((cosine(e, t), i, j));
        }
    }
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_est = vec![false; est.len()];
    let mut used_tru = vec![false; tru.len()];
    let mut pairs = Vec::with_capacity(tru.len());
    for (s, i, j) in sims {
        if !used_est[i] && !used_tru[j] {
            used_est[i] = true;
            used_tru[j] = true;
            pairs.push(MatchedPair {
                estimated: i,
                truth: j,
                similarity: s,
            });
        }
    }
    pairs.sort_by_key(|p| p.truth);
    let mean = pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len().max(1) as f64;
    Ok(RecoveryScore { mean, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    IndependentLgcp,
    NmfKl,
    NmfFrobenius,
    RawCountNmf,
    Pca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::IndependentLgcp,
        ModelKind::NmfKl,
        ModelKind::NmfFrobenius,
        ModelKind::RawCountNmf,
        ModelKind::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::IndependentLgcp => "independent-lgcp",
            ModelKind::NmfKl => "nmf-kl",
            ModelKind::NmfFrobenius => "nmf-frobenius",
            ModelKind::RawCountNmf => "raw-count-nmf",
            ModelKind::Pca => "pca",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything the comparison needs from the train/test split.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub train: &'a CountMatrix,
    pub test: &'a CountMatrix,
    /// Unit-volume LGCP surfaces fit to `train`.
    pub surfaces: &'a IntensityMatrix,
    /// Per-player volume of the train fit, shared by every model.
    pub volumes: &'a [f64],
    pub fraction: f64,
    pub truth: Option<&'a DMatrix<f64>>,
}

impl EvalInput<'_> {
    fn check(&self) -> Result<()> {
        let n = self.surfaces.players.len();
        if self.train.players != self.surfaces.players || self.test.players != self.surfaces.players {
            return Err(Error::ShapeMismatch {
                expected: "train, test and surfaces over the same players".into(),
                found: format!(
                    "{} / {} / {} players",
                    self.train.n_players(),
                    self.test.n_players(),
                    n
                ),
            });
        }
        if self.volumes.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} volumes"),
                found: self.volumes.len().to_string(),
            });
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "holdout fraction {} outside (0, 1)",
                self.fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub ks: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub nmf: NmfConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            ks: vec![1, 2, 4, 6, 8, 12],
            models: ModelKind::ALL.to_vec(),
            nmf: NmfConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub k: usize,
    pub model: FactorModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: ModelKind,
    pub k: usize,
    pub mean: f64,
    pub std_error: f64,
    pub per_player: Vec<f64>,
    pub recovery: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub players: Vec<String>,
    pub fraction: f64,
    pub train_shots: u64,
    pub test_shots: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, model: ModelKind, k: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.model == model && r.k == k)
    }

    /// Mean held-out log-likelihood of `model` for each K in row order.
    pub fn curve(&self, model: ModelKind) -> Vec<(usize, f64)> {
        self.rows.iter().filter(|r| r.model == model).map(|r| (r.k, r.mean)).collect()
    }

    /// `model,k,mean,std_error,recovery,per_player_file`.
    pub fn to_csv(&self, per_player_file: &str) -> String {
        let mut out = String::from("model,k,mean,std_error,recovery,per_player_file\n");
        for r in &self.rows {
            let rec = r.recovery.map(|x| format!("{x:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{},{}",
                r.model, r.k, r.mean, r.std_error, rec, per_player_file
            );
        }
        out
    }

    /// One row per player, one column per model and K.
    pub fn per_player_csv(&self) -> String {
        let mut out = String::from("player");
        for r in &self.rows {
            let _ = write!(out, ",{}@{}", r.model, r.k);
        }
        out.push('\n');
        for (n, p) in self.players.iter().enumerate() {
            out.push_str(p);
            for r in &self.rows {
                let _ = write!(out, ",{:e}", r.per_player[n]);
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "held-out evaluation: {} players, fraction {}, {} train / {} test shots\n",
            self.players.len(),
            self.fraction,
            self.train_shots,
            self.test_shots
        );
        let _ = writeln!(out, "{:<18} {:>4} {:>14} {:>10} {:>9}", "model", "K", "mean loglik", "std err", "recovery");
        for r in &self.rows {
            let rec = r.recovery.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<18} {:>4} {:>14.4} {:>10.4} {:>9}",
                r.model.name(),
                r.k,
                r.mean,
                r.std_error,
                rec
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let per_player = "eval_per_player.csv";
        write_text(&dir.join("eval_report.csv"), &self.to_csv(per_player))?;
        write_text(&dir.join(per_player), &self.per_player_csv())?;
        write_text(&dir.join("eval_summary.txt"), &self.summary())
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Clamp at the floor and rescale each row to unit volume.
fn normalize_rows(mut m: DMatrix<f64>, area: f64) -> DMatrix<f64> {
    m.apply(|x| *x = x.max(INTENSITY_FLOOR));
    for mut row in m.row_iter_mut() {
        let vol = row.sum() * area;
        row /= vol;
    }
    m
}

/// Per-player held-out log-likelihoods of the rows of `surfaces`.
pub fn evaluate_surfaces(input: &EvalInput<'_>, surfaces: &DMatrix<f64>) -> Vec<f64> {
    let area = input.surfaces.grid.tile_area();
    (0..surfaces.nrows())
        .into_par_iter()
        .map(|n| {
            let row: Vec<f64> = surfaces.row(n).iter().copied().collect();
            heldout_loglik_values(input.test.row(n), &row, area, input.volumes[n], input.fraction)
        })
        .collect()
}

/// Rows of `W B` rescaled to unit volume.
pub fn factor_surfaces(model: &FactorModel, area: f64) -> DMatrix<f64> {
    normalize_rows(model.reconstruction(), area)
}

/// Fit every requested model on the train split and score it on the test split.
///
/// Factor models already in `precomputed` (matched by kind and K) are reused.
pub fn run_comparison(
    input: &EvalInput<'_>,
    config: &ComparisonConfig,
    precomputed: &[FittedModel],
) -> Result<(EvalReport, Vec<FittedModel>)> {
    input.check()?;
    let area = input.surfaces.grid.tile_area();
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    let lgcp = if config.models.contains(&ModelKind::IndependentLgcp) {
        Some(evaluate_surfaces(input, &input.surfaces.data))
    } else {
        None
    };

    for &k in &config.ks {
        for &kind in &config.models {
            let (per_player, recovery) = match kind {
                ModelKind::IndependentLgcp => (lgcp.clone().expect("computed above"), None),
                ModelKind::Pca => {
                    let pca = fit_pca(&input.surfaces.data, k)?;
                    (evaluate_surfaces(input, &normalize_rows(pca.reconstruction(), area)), None)
                }
                _ => {
                    let model = match precomputed.iter().find(|f| f.kind == kind && f.k == k) {
                        Some(f) => f.model.clone(),
                        None => fit_factor_model(input, kind, k, &config.nmf)?,
                    };
                    let recovery = match input.truth {
                        Some(t) if k >= t.nrows() => Some(basis_recovery_score(&model.bases, t)?.mean),
                        _ => None,
                    };
                    let per_player = evaluate_surfaces(input, &factor_surfaces(&model, area));
                    fitted.push(FittedModel { kind, k, model });
                    (per_player, recovery)
                }
            };
            let (mean, std_error) = mean_and_se(&per_player);
            rows.push(EvalRow {
                model: kind,
                k,
                mean,
                std_error,
                per_player,
                recovery,
            });
        }
    }
    let report = EvalReport {
        players: input.surfaces.players.clone(),
        fraction: input.fraction,
        train_shots: input.train.total(),
        test_shots: input.test.total(),
        rows,
    };
    Ok((report, fitted))
}

fn fit_factor_model(input: &EvalInput<'_>, kind: ModelKind, k: usize, config: &NmfConfig) -> Result<FactorModel> {
    match kind {
        ModelKind::NmfKl => fit_nmf(NmfInput::Intensity(input.surfaces), k, Loss::Kl, config),
        ModelKind::NmfFrobenius => fit_nmf(NmfInput::Intensity(input.surfaces), k, Loss::Frobenius, config),
        ModelKind::RawCountNmf => fit_nmf(NmfInput::Counts(input.train), k, Loss::Kl, config),
        ModelKind::IndependentLgcp | ModelKind::Pca => unreachable!("not a factor model"),
    }
}
