//! Non-negative matrix factorization `Λ ≈ W B` with multiplicative updates
//! under squared-Frobenius or generalized KL loss.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::court::{CountMatrix, CourtGrid};
use crate::error::{Error, Result};
use crate::lgcp::IntensitySurface;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Kl,
    Frobenius,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Kl => "kl",
            Loss::Frobenius => "frobenius",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Loss::Kl),
            "frobenius" | "fro" => Ok(Loss::Frobenius),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

/// Stacked unit-volume surfaces, one row per player.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    pub grid: CourtGrid,
    pub players: Vec<String>,
    pub data: DMatrix<f64>,
}

impl IntensityMatrix {
    pub fn new(grid: CourtGrid, players: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != players.len() || data.ncols() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} x {}", players.len(), grid.len()),
                found: format!("{} x {}", data.nrows(), data.ncols()),
            });
        }
        let area = grid.tile_area();
        for (n, row) in data.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidParameter(format!("row {n} has negative or NaN entries")));
            }
            let vol = row.sum() * area;
            if (vol - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("row {n} has volume {vol}, expected 1")));
            }
        }
        Ok(IntensityMatrix { grid, players, data })
    }

    pub fn from_surfaces(players: Vec<String>, surfaces: &[IntensitySurface]) -> Result<Self> {
        let grid = surfaces.first().ok_or(Error::EmptyInput)?.grid;
        let v = grid.len();
        let mut data = DMatrix::zeros(surfaces.len(), v);
        for (n, s) in surfaces.iter().enumerate() {
            if s.grid != grid || s.values.len() != v {
                return Err(Error::ShapeMismatch {
                    expected: format!("{v} tiles on a shared grid"),
                    found: format!("surface {n} with {} tiles", s.values.len()),
                });
            }
            for (t, &x) in s.values.iter().enumerate() {
                data[(n, t)] = x;
            }
        }
        IntensityMatrix::new(grid, players, data)
    }
}

/// Squared Frobenius distance.
pub fn frobenius_loss(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(x, y)?;
    Ok(x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Generalized KL divergence `Σ X ln(X/Y) - X + Y` with `0 ln 0 = 0`.
/// Returns `+∞` wherever `X > 0` meets `Y = 0`.
pub fn kl_loss(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(x, y)?;
    Ok(kl_unchecked(x, y))
}

fn kl_unchecked(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln() - a + b;
        } else {
            total += b - a;
        }
    }
    total
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x.shape()),
            found: format!("{:?}", y.shape()),
        });
    }
    Ok(())
}

pub fn loss_value(loss: Loss, data: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let recon = w * b;
    match loss {
        Loss::Frobenius => frobenius_loss(data, &recon),
        Loss::Kl => kl_loss(data, &recon),
    }
    .expect("factor shapes agree with data")
}

fn floor_entries(m: &mut DMatrix<f64>, eps: f64) {
    if eps > 0.0 {
        m.iter_mut().for_each(|v| *v = v.max(eps));
    }
}

/// One Frobenius multiplicative update of `W` then `B`.
pub fn nmf_step_frobenius(w: &mut DMatrix<f64>, b: &mut DMatrix<f64>, data: &DMatrix<f64>, eps: f64) {
    let num = data * b.transpose();
    let den = &*w * (&*b * b.transpose());
    w.zip_zip_apply(&num, &den, |x, n, d| *x *= n / (d + eps));
    floor_entries(w, eps);

    let wt = w.transpose();
    let num = &wt * data;
    let den = (&wt * &*w) * &*b;
    b.zip_zip_apply(&num, &den, |x, n, d| *x *= n / (d + eps));
    floor_entries(b, eps);
}

/// One KL multiplicative update of `W` then `B`.
pub fn nmf_step_kl(w: &mut DMatrix<f64>, b: &mut DMatrix<f64>, data: &DMatrix<f64>, eps: f64) {
    let ratio = |w: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut r = w * b;
        r.zip_apply(data, |y, x| *y = x / (*y + eps));
        r
    };

    let num = ratio(w, b) * b.transpose();
    let basis_mass: Vec<f64> = b.row_iter().map(|row| row.sum()).collect();
    for ((n, k), x) in index_iter_mut(w) {
        *x *= num[(n, k)] / (basis_mass[k] + eps);
    }
    floor_entries(w, eps);

    let num = w.transpose() * ratio(w, b);
    let weight_mass: Vec<f64> = w.column_iter().map(|col| col.sum()).collect();
    for ((k, v), x) in index_iter_mut(b) {
        *x *= num[(k, v)] / (weight_mass[k] + eps);
    }
    floor_entries(b, eps);
}

fn index_iter_mut(m: &mut DMatrix<f64>) -> impl Iterator<Item = ((usize, usize), &mut f64)> {
    let nrows = m.nrows();
    m.iter_mut()
        .enumerate()
        .map(move |(i, x)| ((i % nrows, i / nrows), x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub max_iters: usize,
    /// Stop once the relative loss change falls below this.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Floor for denominators and factor entries; `0` disables it.
    pub epsilon: f64,
    /// Added to every entry of a raw count matrix before fitting.
    pub count_jitter: f64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            max_iters: 2000,
            tolerance: 1e-6,
            restarts: 5,
            seed: 0,
            epsilon: 1e-12,
            count_jitter: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum NmfInput<'a> {
    Intensity(&'a IntensityMatrix),
    Counts(&'a CountMatrix),
}

impl NmfInput<'_> {
    pub fn grid(&self) -> CourtGrid {
        match self {
            NmfInput::Intensity(m) => m.grid,
            NmfInput::Counts(m) => m.grid,
        }
    }

    pub fn players(&self) -> &[String] {
        match self {
            NmfInput::Intensity(m) => &m.players,
            NmfInput::Counts(m) => &m.players,
        }
    }

    /// Matrix actually factorized; count inputs receive additive jitter.
    pub fn data(&self, config: &NmfConfig) -> DMatrix<f64> {
        match self {
            NmfInput::Intensity(m) => m.data.clone(),
            NmfInput::Counts(m) => m.to_matrix().add_scalar(config.count_jitter),
        }
    }
}

/// Fitted factors. `W` is `N x K`, `B` is `K x V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub weights: DMatrix<f64>,
    pub bases: DMatrix<f64>,
    pub loss: Loss,
    /// `+∞` when the iteration broke down numerically.
    pub final_loss: f64,
    /// Loss at initialization followed by the loss after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Restart that produced this model.
    pub restart: usize,
}

impl FactorModel {
    pub fn rank(&self) -> usize {
        self.bases.nrows()
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.weights * &self.bases
    }

    pub fn is_finite(&self) -> bool {
        self.final_loss.is_finite()
    }
}

/// `λ_n = Σ_k W_nk B_k`.
pub fn reconstruct(model: &FactorModel, n: usize) -> Result<Vec<f64>> {
    if n >= model.weights.nrows() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: model.weights.nrows(),
        });
    }
    Ok((model.weights.row(n) * &model.bases).iter().copied().collect())
}

/// Random positive start scaled so `sum(W B) = sum(data)`.
fn initialize<R: Rng + ?Sized>(data: &DMatrix<f64>, k: usize, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, v) = data.shape();
    let mut w = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.1..1.0));
    let mut b = DMatrix::from_fn(k, v, |_, _| rng.random_range(0.1..1.0));
    let scale = (data.sum() / (&w * &b).sum()).sqrt();
    w *= scale;
    b *= scale;
    (w, b)
}

/// Run one restart to convergence from a given start.
pub fn run_updates(
    data: &DMatrix<f64>,
    mut w: DMatrix<f64>,
    mut b: DMatrix<f64>,
    loss: Loss,
    config: &NmfConfig,
) -> FactorModel {
    let mut trace = Vec::with_capacity(config.max_iters.min(4096) + 1);
    let mut current = loss_value(loss, data, &w, &b);
    trace.push(current);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters && current.is_finite() {
        match loss {
            Loss::Frobenius => nmf_step_frobenius(&mut w, &mut b, data, config.epsilon),
            Loss::Kl => nmf_step_kl(&mut w, &mut b, data, config.epsilon),
        }
        iterations += 1;
        let next = loss_value(loss, data, &w, &b);
        let next = if next.is_nan() { f64::INFINITY } else { next };
        trace.push(next);
        let change = (current - next).abs() / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if current.is_finite() && change < config.tolerance {
            converged = true;
            break;
        }
    }
    FactorModel {
        weights: w,
        bases: b,
        loss,
        final_loss: current,
        trace,
        iterations,
        converged,
        restart: 0,
    }
}

/// Fit a plain non-negative matrix, keeping the best of several restarts.
pub fn fit_nmf_matrix(data: &DMatrix<f64>, k: usize, loss: Loss, config: &NmfConfig) -> Result<FactorModel> {
    let (n, v) = data.shape();
    let max = n.min(v);
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    if data.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter("input matrix has negative or NaN entries".into()));
    }
    if !(data.sum() > 0.0) {
        return Err(Error::InvalidParameter("input matrix is all zeros".into()));
    }
    let restarts = config.restarts.max(1);
    let fits: Vec<FactorModel> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, Stream::NmfRestart, r as u64);
            let (w, b) = initialize(data, k, &mut rng);
            let mut fit = run_updates(data, w, b, loss, config);
            fit.restart = r;
            fit
        })
        .collect();
    Ok(fits
        .into_iter()
        .min_by(|a, b| a.final_loss.total_cmp(&b.final_loss).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}

pub fn fit_nmf(input: NmfInput<'_>, k: usize, loss: Loss, config: &NmfConfig) -> Result<FactorModel> {
    fit_nmf_matrix(&input.data(config), k, loss, config)
}
