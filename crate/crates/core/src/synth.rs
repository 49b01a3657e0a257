//! Synthetic shot datasets with planted bases, loadings and logits.
//!
//! Bases are built from shot-chart archetypes (a bump at the rim, corner
//! bumps, three-point and mid-range arc bands) evaluated at tile centers
//! and normalized to unit volume. Locations are drawn tile by tile: a
//! Poisson count per tile, then uniform positions inside the tile.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::court::{CourtGrid, ShotEvent};
use crate::efficiency::logistic;
use crate::error::{Error, Result};
use crate::persist::{ensure_dir, write_matrix, write_text};
use crate::rng::{stream_rng, Stream};
use crate::court::write_shots_csv;

/// Rim location, in court coordinates.
pub const BASKET: [f64; 2] = [17.5, 4.0];

/// Largest pairwise cosine similarity allowed between planted bases.
pub const MAX_BASIS_OVERLAP: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Primitive {
    Bump { center: [f64; 2], sd: f64 },
    Corners { inset: f64, height: f64, sd: f64 },
    /// Band around the rim; `angle` is measured from the axis pointing away
    /// from the baseline, in degrees.
    Arc {
        radius: f64,
        sd: f64,
        angle: f64,
        angle_sd: Option<f64>,
    },
}

impl Primitive {
    fn density(&self, p: [f64; 2], width: f64) -> f64 {
        match *self {
            Primitive::Bump { center, sd } => gauss2(p, center, sd),
            Primitive::Corners { inset, height, sd } => {
                gauss2(p, [inset, height], sd) + gauss2(p, [width - inset, height], sd)
            }
            Primitive::Arc {
                radius,
                sd,
                angle,
                angle_sd,
            } => {
                let dx = p[0] - BASKET[0];
                let dy = p[1] - BASKET[1];
                let r = dx.hypot(dy);
                let radial = (-0.5 * ((r - radius) / sd).powi(2)).exp();
                let angular = match angle_sd {
                    None => 1.0,
                    Some(asd) => {
                        let theta = dx.atan2(dy).to_degrees();
                        (-0.5 * ((theta - angle) / asd).powi(2)).exp()
                    }
                };
                radial * angular
            }
        }
    }
}

fn gauss2(p: [f64; 2], c: [f64; 2], sd: f64) -> f64 {
    (-0.5 * ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (sd * sd)).exp()
}

/// Archetype slots in the order they are handed out, with the
/// population-level logit of each.
fn primitive_slots<R: Rng + ?Sized>(arc_radius: f64, rng: &mut R) -> Vec<(Primitive, f64)> {
    let mut wiggle = |scale: f64| 1.0 + scale * (rng.random::<f64>() * 2.0 - 1.0);
    let three = arc_radius;
    let mid = arc_radius * 0.6;
    vec![
        (
            Primitive::Bump {
                center: BASKET,
                sd: 2.5 * wiggle(0.05),
            },
            0.45,
        ),
        (
            Primitive::Corners {
                inset: 1.5,
                height: 3.0 * wiggle(0.1),
                sd: 2.0 * wiggle(0.05),
            },
            -0.4,
        ),
        (
            Primitive::Arc {
                radius: three * wiggle(0.02),
                sd: 2.0 * wiggle(0.05),
                angle: 0.0,
                angle_sd: Some(14.0 * wiggle(0.05)),
            },
            -0.6,
        ),
        (
            Primitive::Arc {
                radius: mid * wiggle(0.03),
                sd: 1.8 * wiggle(0.05),
                angle: 0.0,
                angle_sd: None,
            },
            -0.3,
        ),
        (
            Primitive::Arc {
                radius: three * wiggle(0.02),
                sd: 2.0 * wiggle(0.05),
                angle: -60.0,
                angle_sd: Some(8.0 * wiggle(0.05)),
            },
            -0.5,
        ),
        (
            Primitive::Arc {
                radius: three * wiggle(0.02),
                sd: 2.0 * wiggle(0.05),
                angle: 60.0,
                angle_sd: Some(8.0 * wiggle(0.05)),
            },
            -0.5,
        ),
    ]
}

/// Number of archetypes available to `make_planted_bases`.
pub const PRIMITIVE_SLOTS: usize = 6;

/// Default three-point radius for the synthetic court (it is narrower than a
/// real one).
pub const DEFAULT_ARC_RADIUS: f64 = 15.0;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone)]
pub struct PlantedBases {
    /// `K* x V`, unit-volume rows.
    pub bases: DMatrix<f64>,
    /// Population logit per basis.
    pub global_logits: Vec<f64>,
}

pub fn make_planted_bases(grid: &CourtGrid, k: usize, arc_radius: f64, seed: u64) -> Result<PlantedBases> {
    if k == 0 {
        return Err(Error::InvalidParameter("at least one planted basis is required".into()));
    }
    if k > PRIMITIVE_SLOTS {
        return Err(Error::TooManyBases {
            requested: k,
            available: PRIMITIVE_SLOTS,
        });
    }
    let mut rng = stream_rng(seed, Stream::SynthBases, 0);
    let slots = primitive_slots(arc_radius, &mut rng);
    let centers = grid.centers();
    let area = grid.tile_area();
    let mut bases = DMatrix::zeros(k, grid.len());
    let mut global_logits = Vec::with_capacity(k);
    for (i, (prim, logit)) in slots.into_iter().take(k).enumerate() {
        let row: Vec<f64> = centers.iter().map(|&c| prim.density(c, grid.width)).collect();
        let vol = row.iter().sum::<f64>() * area;
        if !(vol > 0.0) {
            return Err(Error::InvalidParameter(format!("basis {i} has no mass on this grid")));
        }
        for (t, x) in row.into_iter().enumerate() {
            bases[(i, t)] = x / vol;
        }
        global_logits.push(logit);
    }
    for a in 0..k {
        for b in a + 1..k {
            let ra: Vec<f64> = bases.row(a).iter().copied().collect();
            let rb: Vec<f64> = bases.row(b).iter().copied().collect();
            let similarity = cosine(&ra, &rb);
            if similarity >= MAX_BASIS_OVERLAP {
                return Err(Error::OverlappingBases { a, b, similarity });
            }
        }
    }
    Ok(PlantedBases { bases, global_logits })
}

/// Normalize a weight row to sum one.
fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Locations for one player: tile counts `Poisson(ΔA M Σ_k w̄_k B_kv)`,
/// uniform within each tile.
pub fn sample_player_shots<R: Rng + ?Sized>(
    weights: &[f64],
    bases: &DMatrix<f64>,
    budget: f64,
    grid: &CourtGrid,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    let w = normalized(weights);
    let area = grid.tile_area();
    let mut points = Vec::new();
    for t in 0..grid.len() {
        let rate: f64 = w.iter().enumerate().map(|(k, wk)| wk * bases[(k, t)]).sum::<f64>() * budget * area;
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).expect("positive finite rate").sample(rng) as usize;
        let (x0, x1, y0, y1) = grid.tile_bounds(t);
        for _ in 0..count {
            points.push([rng.random_range(x0..x1), rng.random_range(y0..y1)]);
        }
    }
    points
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcomes {
    /// Planted shot type of each attempt.
    pub types: Vec<usize>,
    pub made: Vec<bool>,
}

/// Draw a type from the planted type posterior at each location, then the
/// outcome from that type's logit.
pub fn sample_outcomes<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    logits: &[f64],
    bases: &DMatrix<f64>,
    weights: &[f64],
    grid: &CourtGrid,
    rng: &mut R,
) -> Result<Outcomes> {
    let w = normalized(weights);
    let mut out = Outcomes::default();
    let mut probs = vec![0.0; w.len()];
    for p in points {
        let t = grid.tile_index(p[0], p[1])?;
        for (k, pk) in probs.iter_mut().enumerate() {
            *pk = w[k] * bases[(k, t)];
        }
        let total: f64 = probs.iter().sum();
        let k = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = probs.len() - 1;
            for (k, &pk) in probs.iter().enumerate() {
                if u < pk {
                    pick = k;
                    break;
                }
                u -= pk;
            }
            pick
        } else {
            rng.random_range(0..probs.len())
        };
        out.types.push(k);
        out.made.push(rng.random::<f64>() < logistic(logits[k]));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub players: usize,
    pub bases: usize,
    pub shots_min: usize,
    pub shots_max: usize,
    pub grid: CourtGrid,
    pub seed: u64,
    /// Dirichlet concentration of the planted loadings.
    pub dirichlet_alpha: f64,
    /// Standard deviation of player logits around the population logit.
    pub logit_spread: f64,
    pub arc_radius: f64,
}

impl Default for SynthConfig {
    /// 60 players averaging ~233 attempts each.
    fn default() -> Self {
        SynthConfig {
            players: 60,
            bases: 4,
            shots_min: 100,
            shots_max: 366,
            grid: CourtGrid::coarse(),
            seed: 0,
            dirichlet_alpha: 0.5,
            logit_spread: 0.3,
            arc_radius: DEFAULT_ARC_RADIUS,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.players == 0 {
            return Err(Error::InvalidParameter("need at least one player".into()));
        }
        if self.bases == 0 || self.bases > PRIMITIVE_SLOTS {
            return Err(Error::TooManyBases {
                requested: self.bases,
                available: PRIMITIVE_SLOTS,
            });
        }
        if self.shots_min > self.shots_max {
            return Err(Error::InvalidParameter("shots_min exceeds shots_max".into()));
        }
        if !(self.dirichlet_alpha > 0.0) || !(self.logit_spread >= 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive, spread non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedTruth {
    pub grid: CourtGrid,
    pub players: Vec<String>,
    /// `K* x V`, unit-volume rows.
    pub bases: DMatrix<f64>,
    /// `N x K*`, rows summing to one.
    pub weights: DMatrix<f64>,
    /// `N x K*` player logits.
    pub logits: DMatrix<f64>,
    pub global_logits: Vec<f64>,
    pub budgets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub shots: Vec<ShotEvent>,
    /// Planted type of every shot, aligned with `shots`.
    pub types: Vec<usize>,
    pub truth: PlantedTruth,
}

pub fn player_id(n: usize) -> String {
    format!("p{n:03}")
}

/// Build a dataset in memory. Player `n` draws from its own derived streams.
pub fn synthesize(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let grid = config.grid;
    let planted = make_planted_bases(&grid, config.bases, config.arc_radius, config.seed)?;
    let k = config.bases;
    let gamma = Gamma::new(config.dirichlet_alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    struct PlayerDraw {
        weights: Vec<f64>,
        logits: Vec<f64>,
        budget: usize,
        points: Vec<[f64; 2]>,
        outcomes: Outcomes,
    }

    let draws: Vec<PlayerDraw> = (0..config.players)
        .into_par_iter()
        .map(|n| -> Result<PlayerDraw> {
            let mut rng = stream_rng(config.seed, Stream::SynthWeights, n as u64);
            let mut weights: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            if weights.iter().sum::<f64>() <= 0.0 {
                weights = vec![1.0; k];
            }
            let weights = normalized(&weights);
            let logits: Vec<f64> = planted
                .global_logits
                .iter()
                .map(|g| g + config.logit_spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let budget = rng.random_range(config.shots_min..=config.shots_max);

            let mut rng = stream_rng(config.seed, Stream::SynthPlayer, n as u64);
            let points = sample_player_shots(&weights, &planted.bases, budget as f64, &grid, &mut rng);
            let mut rng = stream_rng(config.seed, Stream::SynthOutcomes, n as u64);
            let outcomes = sample_outcomes(&points, &logits, &planted.bases, &weights, &grid, &mut rng)?;
            Ok(PlayerDraw {
                weights,
                logits,
                budget,
                points,
                outcomes,
            })
        })
        .collect::<Result<_>>()?;

    let players: Vec<String> = (0..config.players).map(player_id).collect();
    let mut shots = Vec::new();
    let mut types = Vec::new();
    for (id, d) in players.iter().zip(&draws) {
        for ((p, &t), &made) in d.points.iter().zip(&d.outcomes.types).zip(&d.outcomes.made) {
            shots.push(ShotEvent::new(id.clone(), p[0], p[1], made));
            types.push(t);
        }
    }
    let weights = DMatrix::from_fn(config.players, k, |n, j| draws[n].weights[j]);
    let logits = DMatrix::from_fn(config.players, k, |n, j| draws[n].logits[j]);
    Ok(SynthDataset {
        config: config.clone(),
        shots,
        types,
        truth: PlantedTruth {
            grid,
            players,
            bases: planted.bases,
            weights,
            logits,
            global_logits: planted.global_logits,
            budgets: draws.iter().map(|d| d.budget).collect(),
        },
    })
}

/// File names written by [`generate_dataset`].
pub mod files {
    pub const SHOTS: &str = "shots.csv";
    pub const TRUTH_B: &str = "truth_B.csv";
    pub const TRUTH_W: &str = "truth_W.csv";
    pub const TRUTH_BETA: &str = "truth_beta.csv";
    pub const MANIFEST: &str = "synth_manifest.json";
}

/// Synthesize and write the shot CSV, ground-truth matrices and manifest.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<SynthDataset> {
    let data = synthesize(config)?;
    ensure_dir(out_dir)?;
    write_shots_csv(&out_dir.join(files::SHOTS), &data.shots)?;
    let t = &data.truth;
    let grid_line = t.grid.to_string();
    let basis_labels: Vec<String> = (0..config.bases).map(|k| format!("basis{k}")).collect();
    write_matrix(&out_dir.join(files::TRUTH_B), &[grid_line], &basis_labels, &t.bases)?;
    write_matrix(&out_dir.join(files::TRUTH_W), &[], &t.players, &t.weights)?;
    let mut beta_rows = t.players.clone();
    beta_rows.push("global".into());
    let beta = DMatrix::from_fn(t.players.len() + 1, config.bases, |n, k| {
        if n < t.players.len() {
            t.logits[(n, k)]
        } else {
            t.global_logits[k]
        }
    });
    write_matrix(&out_dir.join(files::TRUTH_BETA), &[], &beta_rows, &beta)?;
    let manifest = serde_json::json!({
        "config": config,
        "seed": config.seed,
        "total_shots": data.shots.len(),
        "budgets": t.budgets,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&out_dir.join(files::MANIFEST), &(text + "\n"))?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn planted_bases_are_unit_volume_and_disjoint() {
        for grid in [CourtGrid::coarse(), CourtGrid::default()] {
            let p = make_planted_bases(&grid, PRIMITIVE_SLOTS, DEFAULT_ARC_RADIUS, 3).unwrap();
            for row in p.bases.row_iter() {
                assert!((row.sum() * grid.tile_area() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
            for a in 0..PRIMITIVE_SLOTS {
                for b in a + 1..PRIMITIVE_SLOTS {
                    let ra: Vec<f64> = p.bases.row(a).iter().copied().collect();
                    let rb: Vec<f64> = p.bases.row(b).iter().copied().collect();
                    assert!(cosine(&ra, &rb) < MAX_BASIS_OVERLAP, "{a} {b}");
                }
            }
        }
        let a = make_planted_bases(&CourtGrid::coarse(), 4, DEFAULT_ARC_RADIUS, 9).unwrap();
        let b = make_planted_bases(&CourtGrid::coarse(), 4, DEFAULT_ARC_RADIUS, 9).unwrap();
        assert_eq!(a.bases, b.bases);
        assert!(matches!(
            make_planted_bases(&CourtGrid::coarse(), 7, DEFAULT_ARC_RADIUS, 9),
            Err(Error::TooManyBases { .. })
        ));
    }

    #[test]
    fn single_tile_counts_are_poisson() {
        let grid = CourtGrid::new(1.0, 1.0, 1.0).unwrap();
        let bases = DMatrix::from_element(1, 1, 1.0);
        let mut rng = seeded(4);
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| sample_player_shots(&[1.0], &bases, 100.0, &grid, &mut rng).len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        assert!((mean - 100.0).abs() < 3.0 * (100.0f64 / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn unit_weight_reproduces_the_basis() {
        let grid = CourtGrid::coarse();
        let p = make_planted_bases(&grid, 4, DEFAULT_ARC_RADIUS, 1).unwrap();
        let mut rng = seeded(5);
        let pts = sample_player_shots(&[0.0, 0.0, 1.0, 0.0], &p.bases, 100_000.0, &grid, &mut rng);
        let mut freq = vec![0.0; grid.len()];
        for q in &pts {
            assert!(grid.contains(q[0], q[1]));
            freq[grid.tile_index(q[0], q[1]).unwrap()] += 1.0;
        }
        let n = pts.len() as f64;
        let tv: f64 = freq
            .iter()
            .enumerate()
            .map(|(t, f)| (f / n - p.bases[(2, t)] * grid.tile_area()).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn superposition_of_poisson_draws() {
        // counts under λ1 + λ2 versus the union of separate draws
        let grid = CourtGrid::new(3.0, 1.0, 1.0).unwrap();
        let l1 = DMatrix::from_row_slice(1, 3, &[0.6, 0.3, 0.1]);
        let l2 = DMatrix::from_row_slice(1, 3, &[0.1, 0.2, 0.7]);
        let both = DMatrix::from_row_slice(2, 3, &[0.6, 0.3, 0.1, 0.1, 0.2, 0.7]);
        let reps = 1000;
        let mut rng = seeded(6);
        let mut joint = vec![Vec::new(); 3];
        let mut union = vec![Vec::new(); 3];
        for _ in 0..reps {
            let tally = |pts: &[[f64; 2]], out: &mut [f64; 3]| {
                for q in pts {
                    out[grid.tile_index(q[0], q[1]).unwrap()] += 1.0;
                }
            };
            let mut a = [0.0; 3];
            // equal weights on both rows with budget 60 == 30 + 30
            tally(&sample_player_shots(&[1.0, 1.0], &both, 60.0, &grid, &mut rng), &mut a);
            let mut b = [0.0; 3];
            tally(&sample_player_shots(&[1.0], &l1, 30.0, &grid, &mut rng), &mut b);
            tally(&sample_player_shots(&[1.0], &l2, 30.0, &grid, &mut rng), &mut b);
            for t in 0..3 {
                joint[t].push(a[t]);
                union[t].push(b[t]);
            }
        }
        for t in 0..3 {
            let expected = 30.0 * (l1[(0, t)] + l2[(0, t)]);
            for sample in [&joint[t], &union[t]] {
                let m = sample.iter().sum::<f64>() / reps as f64;
                let v = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
                assert!((m - expected).abs() < 3.0 * (expected / reps as f64).sqrt(), "mean {m} vs {expected}");
                // variance of a Poisson sample variance is about λ + 2λ²/(n-1)
                let se_var = ((expected + 2.0 * expected * expected) / reps as f64).sqrt();
                assert!((v - expected).abs() < 3.0 * se_var, "var {v} vs {expected}");
            }
        }
    }

    #[test]
    fn outcome_rates() {
        let grid = CourtGrid::new(2.0, 1.0, 1.0).unwrap();
        let bases = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let pts: Vec<[f64; 2]> = (0..20_000).map(|i| [0.25 + (i % 2) as f64, 0.5]).collect();
        let mut rng = seeded(7);

        let o = sample_outcomes(&pts, &[0.0, 0.0], &bases, &[0.5, 0.5], &grid, &mut rng).unwrap();
        let rate = o.made.iter().filter(|&&m| m).count() as f64 / pts.len() as f64;
        assert!((rate - 0.5).abs() < 3.0 * (0.25 / pts.len() as f64).sqrt());
        assert!(o.types.iter().enumerate().all(|(i, &t)| t == i % 2));

        let o = sample_outcomes(&pts, &[30.0, 30.0], &bases, &[0.5, 0.5], &grid, &mut rng).unwrap();
        assert!(o.made.iter().all(|&m| m));

        let single: Vec<[f64; 2]> = pts.iter().copied().filter(|p| p[0] < 1.0).collect();
        let o = sample_outcomes(&single, &[1.0, -3.0], &bases, &[1.0, 0.0], &grid, &mut rng).unwrap();
        let rate = o.made.iter().filter(|&&m| m).count() as f64 / single.len() as f64;
        let p = 0.731_058_578_630_004_9;
        assert!((rate - p).abs() < 3.0 * (p * (1.0 - p) / single.len() as f64).sqrt());
    }

    #[test]
    fn dataset_scale_and_reproducibility() {
        let cfg = SynthConfig {
            shots_min: 300,
            shots_max: 700,
            seed: 11,
            ..SynthConfig::default()
        };
        let a = synthesize(&cfg).unwrap();
        assert!((18_000..=42_000).contains(&a.shots.len()), "{}", a.shots.len());
        assert!(a.shots.iter().all(|s| cfg.grid.contains(s.x, s.y)));
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.shots, b.shots);
        assert_eq!(a.truth.logits, b.truth.logits);

        let d = SynthConfig::default();
        assert_eq!(d.players, 60);
        assert!(((d.shots_min + d.shots_max) as f64 / 2.0 - 78_000.0 / 335.0).abs() < 1.0);
    }

    #[test]
    fn files_are_byte_identical() {
        let cfg = SynthConfig {
            players: 5,
            seed: 2,
            ..SynthConfig::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, d1.path()).unwrap();
        generate_dataset(&cfg, d2.path()).unwrap();
        for f in [files::SHOTS, files::TRUTH_B, files::TRUTH_W, files::TRUTH_BETA, files::MANIFEST] {
            assert_eq!(std::fs::read(d1.path().join(f)).unwrap(), std::fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
    }
}
