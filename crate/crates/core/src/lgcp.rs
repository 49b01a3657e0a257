//! Discretized log-Gaussian Cox process fits.
//!
//! Each player's tile counts are Poisson with rate `ΔA exp(z_v + z0)`, where
//! `z` carries the squared-exponential field prior. The posterior over `z`
//! is explored with elliptical slice sampling and summarized by the
//! posterior mean intensity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::court::{CountMatrix, CourtGrid};
use crate::error::{Error, Result};
use crate::ess::ess_step;
use crate::kernel::{CovFactor, GaussianPrior, KernelHyper};
use crate::rng::{derive_seed, seeded, Stream};

/// How the bias `z0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum BiasMode {
    /// `z0 = ln(M / (V ΔA))`, the empirical mean log-rate.
    Empirical,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgcpConfig {
    pub kernel: KernelHyper,
    pub bias: BiasMode,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for LgcpConfig {
    fn default() -> Self {
        LgcpConfig {
            kernel: KernelHyper::default(),
            bias: BiasMode::Empirical,
            burn_in: 500,
            samples: 500,
            thin: 2,
            seed: 0,
        }
    }
}

impl LgcpConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.samples == 0 || self.thin == 0 {
            return Err(Error::InvalidParameter(
                "kept samples and thinning interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Non-negative per-tile rates over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySurface {
    pub grid: CourtGrid,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl IntensitySurface {
    pub fn new(grid: CourtGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} tiles", grid.len()),
                found: format!("{} values", values.len()),
            });
        }
        Ok(IntensitySurface {
            grid,
            values,
            normalized: false,
        })
    }

    /// `Σ λ_v ΔA`.
    pub fn volume(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.tile_area()
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}

/// Rescale to unit volume; also returns the original volume.
pub fn normalize_unit_volume(surface: &IntensitySurface) -> Result<(IntensitySurface, f64)> {
    let volume = surface.volume();
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(Error::ZeroVolume);
    }
    let values = surface.values.iter().map(|v| v / volume).collect();
    Ok((
        IntensitySurface {
            grid: surface.grid,
            values,
            normalized: true,
        },
        volume,
    ))
}

/// `Σ_v X_v ln(ΔA λ_v) - ΔA λ_v - ln X_v!` with `λ = exp(z + z0)`.
pub fn poisson_loglik(counts: &[u32], z: &[f64], z0: f64, tile_area: f64) -> f64 {
    let log_area = tile_area.ln();
    counts
        .iter()
        .zip(z)
        .map(|(&x, &zv)| {
            let eta = zv + z0 + log_area;
            x as f64 * eta - eta.exp() - ln_factorial(x as u64)
        })
        .sum()
}

/// Log-likelihood with the count-only constant dropped; cheap enough to
/// sit inside the sampler loop.
struct PoissonField<'a> {
    counts: &'a [u32],
    offset: f64,
}

impl PoissonField<'_> {
    fn eval(&self, z: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(z)
            .map(|(&x, &zv)| {
                let eta = zv + self.offset;
                x as f64 * eta - eta.exp()
            })
            .sum()
    }
}

pub fn resolve_bias(counts: &[u32], grid: &CourtGrid, mode: BiasMode) -> Result<f64> {
    match mode {
        BiasMode::Fixed(z0) => Ok(z0),
        BiasMode::Empirical => {
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            if total == 0 {
                return Err(Error::ZeroCountEmpiricalBias);
            }
            Ok((total as f64 / (grid.len() as f64 * grid.tile_area())).ln())
        }
    }
}

#[derive(Debug, Clone)]
pub struct LgcpFit {
    /// Posterior mean of `exp(z + z0)`, unnormalized.
    pub surface: IntensitySurface,
    /// Per-tile posterior variance of the intensity (diagnostic only).
    pub variance: Vec<f64>,
    pub bias: f64,
    /// Mean likelihood evaluations per slice update.
    pub mean_proposals: f64,
}

/// Posterior-mean intensity for one player's counts.
pub fn fit_lgcp(
    counts: &[u32],
    grid: &CourtGrid,
    factor: &CovFactor,
    config: &LgcpConfig,
) -> Result<LgcpFit> {
    config.validate()?;
    let v = grid.len();
    if counts.len() != v || factor.dim() != v {
        return Err(Error::ShapeMismatch {
            expected: format!("{v} tiles"),
            found: format!("{} counts, factor of dimension {}", counts.len(), factor.dim()),
        });
    }
    let z0 = resolve_bias(counts, grid, config.bias)?;
    let field = PoissonField {
        counts,
        offset: z0 + grid.tile_area().ln(),
    };
    let ll = |z: &[f64]| field.eval(z);

    let mut rng = seeded(config.seed);
    let mut z = vec![0.0; v];
    let mut current = ll(&z);
    let mut proposals = 0usize;
    let mut steps = 0usize;
    let mut step = |z: &mut [f64], current: &mut f64| {
        let s = ess_step(z, *current, factor, ll, &mut rng);
        *current = s.loglik;
        proposals += s.proposals;
        steps += 1;
    };

    for _ in 0..config.burn_in {
        step(&mut z, &mut current);
    }
    let mut sum = vec![0.0; v];
    let mut sum_sq = vec![0.0; v];
    for _ in 0..config.samples {
        for _ in 0..config.thin {
            step(&mut z, &mut current);
        }
        for ((s, q), &zv) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&z) {
            let lam = (zv + z0).exp();
            *s += lam;
            *q += lam * lam;
        }
    }
    let n = config.samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let variance = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n - m * m).max(0.0))
        .collect();
    Ok(LgcpFit {
        surface: IntensitySurface::new(*grid, mean)?,
        variance,
        bias: z0,
        mean_proposals: proposals as f64 / steps.max(1) as f64,
    })
}

/// Independent fits for every row of a count matrix. Player `n` samples
/// with a seed derived from `(config.seed, n)`, so the result does not
/// depend on the thread pool.
pub fn fit_players(counts: &CountMatrix, factor: &CovFactor, config: &LgcpConfig) -> Result<Vec<LgcpFit>> {
    (0..counts.n_players())
        .into_par_iter()
        .map(|n| {
            let cfg = LgcpConfig {
                seed: derive_seed(config.seed, Stream::Lgcp, n as u64),
                ..config.clone()
            };
            fit_lgcp(counts.row(n), &counts.grid, factor, &cfg)
        })
        .collect()
}
