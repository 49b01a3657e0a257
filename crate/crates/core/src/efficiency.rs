//! Hierarchical latent-variable model of shooting efficiency per basis.
//!
//! Each shot has an unobserved type `k` with `p(k | x) ∝ w̄_nk B̄_k(x)`, and
//! is made with probability `logit⁻¹(β_nk)`. Player logits share a
//! per-basis normal prior `β_nk ~ N(β0_k, σ²_k)` with `β0_k ~ N(0, σ0²)` and
//! `σ²_k ~ Inv-Gamma(a, b)`. Inference is Gibbs sampling over sampled shot
//! types, per-player elliptical slice updates of `β_n`, and conjugate draws
//! of `β0` and `σ²`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::court::{CourtGrid, ShotEvent};
use crate::error::{Error, Result};
use crate::ess::{ess_step, EssStep};
use crate::kernel::GaussianPrior;
use crate::nmf::FactorModel;
use crate::rng::{stream_rng, Stream};

/// `1 / (1 + e^{-x})`, evaluated without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(x)`.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Loadings rescaled so each basis is a distribution over tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedLoadings {
    /// `W̄_nk = W_nk Σ_v B_kv`, `N x K`.
    pub weights: DMatrix<f64>,
    /// Row-normalized bases, `K x V`.
    pub bases: DMatrix<f64>,
    /// Index of each kept basis in the source model.
    pub kept: Vec<usize>,
}

impl AdjustedLoadings {
    pub fn n_players(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bases(&self) -> usize {
        self.bases.nrows()
    }
}

pub fn adjust_weights(model: &FactorModel) -> AdjustedLoadings {
    adjust_matrices(&model.weights, &model.bases)
}

/// Bases with zero total mass are dropped.
pub fn adjust_matrices(weights: &DMatrix<f64>, bases: &DMatrix<f64>) -> AdjustedLoadings {
    let kept: Vec<usize> = (0..bases.nrows()).filter(|&k| bases.row(k).sum() > 0.0).collect();
    if kept.len() < bases.nrows() {
        log::warn!("dropping {} basis rows with zero mass", bases.nrows() - kept.len());
    }
    let mass: Vec<f64> = kept.iter().map(|&k| bases.row(k).sum()).collect();
    let adj_w = DMatrix::from_fn(weights.nrows(), kept.len(), |n, j| weights[(n, kept[j])] * mass[j]);
    let adj_b = DMatrix::from_fn(kept.len(), bases.ncols(), |j, v| bases[(kept[j], v)] / mass[j]);
    AdjustedLoadings {
        weights: adj_w,
        bases: adj_b,
        kept,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypePosterior {
    pub probs: Vec<f64>,
    /// Set when no basis puts mass on the tile; `probs` is then uniform.
    pub degenerate: bool,
}

/// `p(k | x) ∝ w̄_k B̄_k(v)` for a location in tile `tile`.
pub fn shot_type_posterior(tile: usize, weights: &[f64], bases: &DMatrix<f64>) -> TypePosterior {
    let mut probs: Vec<f64> = weights.iter().enumerate().map(|(k, w)| w * bases[(k, tile)]).collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 && total.is_finite() {
        probs.iter_mut().for_each(|p| *p /= total);
        TypePosterior {
            probs,
            degenerate: false,
        }
    } else {
        let k = probs.len();
        TypePosterior {
            probs: vec![1.0 / k as f64; k],
            degenerate: true,
        }
    }
}

pub fn shot_type_posterior_at(
    x: f64,
    y: f64,
    grid: &CourtGrid,
    weights: &[f64],
    bases: &DMatrix<f64>,
) -> Result<TypePosterior> {
    Ok(shot_type_posterior(grid.tile_index(x, y)?, weights, bases))
}

/// `Σ_k logit⁻¹(β_k) p(k | x)`.
pub fn predict_fg_pct(posterior: &TypePosterior, logits: &[f64]) -> f64 {
    posterior
        .probs
        .iter()
        .zip(logits)
        .map(|(p, &b)| p * logistic(b))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LvmPrior {
    /// Variance of the global logit prior.
    pub sigma0_sq: f64,
    /// Inverse-gamma shape.
    pub a: f64,
    /// Inverse-gamma rate.
    pub b: f64,
}

impl Default for LvmPrior {
    fn default() -> Self {
        LvmPrior {
            sigma0_sq: 100.0,
            a: 0.1,
            b: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyModel {
    pub beta0: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// `N x K` player logits.
    pub beta: DMatrix<f64>,
    pub prior: LvmPrior,
}

impl EfficiencyModel {
    pub fn new(n_players: usize, n_bases: usize, prior: LvmPrior) -> Self {
        EfficiencyModel {
            beta0: vec![0.0; n_bases],
            sigma2: vec![1.0; n_bases],
            beta: DMatrix::zeros(n_players, n_bases),
            prior,
        }
    }

    pub fn n_bases(&self) -> usize {
        self.beta0.len()
    }
}

/// Zero-mean prior of one player's deviations `β_n - β0`, independent across bases.
struct DeviationPrior<'a> {
    sigma2: &'a [f64],
}

impl GaussianPrior for DeviationPrior<'_> {
    fn dim(&self) -> usize {
        self.sigma2.len()
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, s2) in out.iter_mut().zip(self.sigma2) {
            *o = s2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Conjugate draw `σ²_k ~ Inv-Gamma(a + N/2, b + ½ Σ_n (β_nk - β0_k)²)`.
pub fn gibbs_sigma_update<R: Rng + ?Sized>(beta_col: &[f64], beta0: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    let (shape, rate) = sigma_posterior_params(beta_col, beta0, a, b);
    let g = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate");
    loop {
        let draw = 1.0 / g.sample(rng);
        if draw.is_finite() && draw > 0.0 {
            return draw;
        }
    }
}

/// Shape and rate of the conditional posterior of `σ²_k`.
pub fn sigma_posterior_params(beta_col: &[f64], beta0: f64, a: f64, b: f64) -> (f64, f64) {
    let ss: f64 = beta_col.iter().map(|x| (x - beta0).powi(2)).sum();
    (a + beta_col.len() as f64 / 2.0, b + 0.5 * ss)
}

/// A shot attributed to a loadings row and a tile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedShot {
    pub player: usize,
    pub tile: usize,
    pub made: bool,
}

/// Map shots to loadings rows; every shot's player must appear in `players`.
pub fn observed_shots(shots: &[ShotEvent], players: &[String], grid: &CourtGrid) -> Result<Vec<ObservedShot>> {
    let lookup: std::collections::HashMap<&str, usize> =
        players.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    shots
        .iter()
        .map(|s| {
            let player = *lookup
                .get(s.player.as_str())
                .ok_or_else(|| Error::UnknownPlayer(s.player.clone()))?;
            Ok(ObservedShot {
                player,
                tile: grid.tile_index(s.x, s.y)?,
                made: s.made,
            })
        })
        .collect()
}

/// Draw a type for every shot from its posterior given the loadings.
pub fn sample_shot_types<R: Rng + ?Sized>(
    shots: &[ObservedShot],
    loadings: &AdjustedLoadings,
    rng: &mut R,
) -> Vec<usize> {
    let k = loadings.n_bases();
    let mut weights = vec![0.0; k];
    shots
        .iter()
        .map(|s| {
            weights
                .iter_mut()
                .zip(loadings.weights.row(s.player).iter())
                .for_each(|(w, &x)| *w = x);
            let post = shot_type_posterior(s.tile, &weights, &loadings.bases);
            sample_categorical(&post.probs, rng)
        })
        .collect()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    // round-off: fall back to the last type with positive probability
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Made and attempted counts per (player, type).
#[derive(Debug, Clone, PartialEq)]
pub struct TypeTallies {
    pub attempts: DMatrix<f64>,
    pub makes: DMatrix<f64>,
}

impl TypeTallies {
    pub fn new(players: usize, bases: usize) -> Self {
        TypeTallies {
            attempts: DMatrix::zeros(players, bases),
            makes: DMatrix::zeros(players, bases),
        }
    }

    pub fn from_types(shots: &[ObservedShot], types: &[usize], players: usize, bases: usize) -> Self {
        let mut t = TypeTallies::new(players, bases);
        for (s, &k) in shots.iter().zip(types) {
            t.attempts[(s.player, k)] += 1.0;
            if s.made {
                t.makes[(s.player, k)] += 1.0;
            }
        }
        t
    }

    /// Bernoulli log-likelihood of player `n` at logits `beta`.
    fn player_loglik(&self, n: usize, beta: impl Iterator<Item = f64>) -> f64 {
        let mut total = 0.0;
        for (j, b) in beta.enumerate() {
            let att = self.attempts[(n, j)];
            if att == 0.0 {
                continue;
            }
            let made = self.makes[(n, j)];
            total += made * log_logistic(b) + (att - made) * log_logistic(-b);
        }
        total
    }
}

/// One update of `(β0, β)` given `σ²` and tallies: an elliptical slice step on
/// each player's deviations `β_n - β0` under their normal prior, followed by
/// the conjugate normal draw of `β0`. Returns the total number of proposals.
pub fn gibbs_beta_step<R: Rng + ?Sized>(state: &mut EfficiencyModel, tallies: &TypeTallies, rng: &mut R) -> usize {
    let k = state.n_bases();
    let prior = DeviationPrior { sigma2: &state.sigma2 };
    let beta0 = state.beta0.clone();
    let mut proposals = 0;
    let mut dev = vec![0.0; k];
    for n in 0..state.beta.nrows() {
        for j in 0..k {
            dev[j] = state.beta[(n, j)] - beta0[j];
        }
        let loglik = |d: &[f64]| tallies.player_loglik(n, d.iter().zip(&beta0).map(|(d, b)| d + b));
        let current = loglik(&dev);
        let step: EssStep = ess_step(&mut dev, current, &prior, loglik, rng);
        proposals += step.proposals;
        for j in 0..k {
            state.beta[(n, j)] = beta0[j] + dev[j];
        }
    }
    let players = state.beta.nrows() as f64;
    for j in 0..k {
        let precision = 1.0 / state.prior.sigma0_sq + players / state.sigma2[j];
        let mean = state.beta.column(j).sum() / state.sigma2[j] / precision;
        state.beta0[j] = mean + rng.sample::<f64, _>(StandardNormal) / precision.sqrt();
    }
    proposals
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub prior: LvmPrior,
}

impl Default for EfficiencyConfig {
    fn default() -> Self {
        EfficiencyConfig {
            sweeps: 2000,
            burn_in: 500,
            seed: 0,
            prior: LvmPrior::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EfficiencyFit {
    /// Posterior means of `β0`, `σ²` and `β`.
    pub posterior_mean: EfficiencyModel,
    /// Posterior mean of `logit⁻¹(β_nk)`.
    pub accuracy_mean: DMatrix<f64>,
    /// Posterior mean of `logit⁻¹(β0_k)`.
    pub global_accuracy_mean: Vec<f64>,
    /// `σ²` after every sweep.
    pub sigma2_trace: Vec<Vec<f64>>,
    /// `β0` after every sweep.
    pub beta0_trace: Vec<Vec<f64>>,
    /// Posterior mean number of shots of each type per player.
    pub type_counts: DMatrix<f64>,
}

pub fn fit_efficiency(
    shots: &[ObservedShot],
    loadings: &AdjustedLoadings,
    config: &EfficiencyConfig,
) -> Result<EfficiencyFit> {
    if shots.is_empty() {
        return Err(Error::EmptyInput);
    }
    if config.burn_in >= config.sweeps {
        return Err(Error::InvalidParameter(format!(
            "burn-in {} must be smaller than sweeps {}",
            config.burn_in, config.sweeps
        )));
    }
    let (n, k) = (loadings.n_players(), loadings.n_bases());
    if let Some(s) = shots.iter().find(|s| s.player >= n || s.tile >= loadings.bases.ncols()) {
        return Err(Error::IndexOutOfRange {
            index: s.player,
            len: n,
        });
    }
    let mut rng = stream_rng(config.seed, Stream::Efficiency, 0);
    let mut state = EfficiencyModel::new(n, k, config.prior);

    let kept = (config.sweeps - config.burn_in) as f64;
    let mut mean = EfficiencyModel {
        beta0: vec![0.0; k],
        sigma2: vec![0.0; k],
        beta: DMatrix::zeros(n, k),
        prior: config.prior,
    };
    let mut accuracy = DMatrix::zeros(n, k);
    let mut global_accuracy = vec![0.0; k];
    let mut type_counts = DMatrix::zeros(n, k);
    let mut sigma2_trace = Vec::with_capacity(config.sweeps);
    let mut beta0_trace = Vec::with_capacity(config.sweeps);

    for sweep in 0..config.sweeps {
        let types = sample_shot_types(shots, loadings, &mut rng);
        let tallies = TypeTallies::from_types(shots, &types, n, k);
        gibbs_beta_step(&mut state, &tallies, &mut rng);
        for j in 0..k {
            let col: Vec<f64> = state.beta.column(j).iter().copied().collect();
            state.sigma2[j] = gibbs_sigma_update(&col, state.beta0[j], config.prior.a, config.prior.b, &mut rng);
        }
        sigma2_trace.push(state.sigma2.clone());
        beta0_trace.push(state.beta0.clone());

        if sweep >= config.burn_in {
            for (j, acc) in global_accuracy.iter_mut().enumerate() {
                mean.beta0[j] += state.beta0[j] / kept;
                mean.sigma2[j] += state.sigma2[j] / kept;
                *acc += logistic(state.beta0[j]) / kept;
            }
            mean.beta += &state.beta / kept;
            accuracy += state.beta.map(logistic) / kept;
            type_counts += &tallies.attempts / kept;
        }
    }
    Ok(EfficiencyFit {
        posterior_mean: mean,
        accuracy_mean: accuracy,
        global_accuracy_mean: global_accuracy,
        sigma2_trace,
        beta0_trace,
        type_counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySurfaces {
    pub player: Vec<f64>,
    /// Same loadings with `β0` in place of the player's logits.
    pub global: Vec<f64>,
}

/// Predicted make probability at every tile for player `n`.
pub fn efficiency_surface(
    n: usize,
    grid: &CourtGrid,
    loadings: &AdjustedLoadings,
    model: &EfficiencyModel,
) -> Result<EfficiencySurfaces> {
    if n >= loadings.n_players() || n >= model.beta.nrows() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: loadings.n_players().min(model.beta.nrows()),
        });
    }
    let weights: Vec<f64> = loadings.weights.row(n).iter().copied().collect();
    let logits: Vec<f64> = model.beta.row(n).iter().copied().collect();
    let mut out = EfficiencySurfaces {
        player: Vec::with_capacity(grid.len()),
        global: Vec::with_capacity(grid.len()),
    };
    for t in 0..grid.len() {
        let post = shot_type_posterior(t, &weights, &loadings.bases);
        out.player.push(predict_fg_pct(&post, &logits));
        out.global.push(predict_fg_pct(&post, &model.beta0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use crate::rng::seeded;

    fn batch_se(xs: &[f64]) -> f64 {
        let b = 40;
        let size = xs.len() / b;
        let means: Vec<f64> = xs.chunks(size).take(b).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!(logistic(800.0) == 1.0 && logistic(-800.0) >= 0.0);
        assert!(log_logistic(-800.0).is_finite());
        assert!((log_logistic(-3.0) - logistic(-3.0).ln()).abs() < 1e-14);
        assert!((log_logistic(40.0) - logistic(40.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn adjusted_loadings() {
        let w = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 1.0, 0.2]);
        let b = DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 0.1, 0.1, 0.8]);
        let adj = adjust_matrices(&w, &b);
        assert!((adj.weights - w).abs().max() < 1e-15);

        let w = DMatrix::from_row_slice(1, 1, &[2.0]);
        let b = DMatrix::from_row_slice(1, 3, &[1.0, 0.5, 1.5]);
        let adj = adjust_matrices(&w, &b);
        assert!((adj.weights[(0, 0)] - 6.0).abs() < 1e-15);
        assert!((adj.bases.row(0).sum() - 1.0).abs() < 1e-15);

        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.5, 0.0, 4.0]);
        let b = DMatrix::from_row_slice(3, 2, &[0.3, 0.9, 0.0, 0.0, 2.0, 0.1]);
        let adj = adjust_matrices(&w, &b);
        assert_eq!(adj.kept, vec![0, 2]);
        let before = &w * &b;
        let after = &adj.weights * &adj.bases;
        assert!((before - after).abs().max() < 1e-9);
    }

    #[test]
    fn type_posterior_cases() {
        let b = DMatrix::from_row_slice(1, 2, &[0.4, 0.6]);
        assert_eq!(shot_type_posterior(1, &[3.0], &b).probs, vec![1.0]);

        let b = DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.0, 1.0]);
        assert_eq!(shot_type_posterior(0, &[1.0, 5.0], &b).probs, vec![1.0, 0.0]);

        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let p = shot_type_posterior(0, &[1.0, 2.0], &b);
        assert!(p.degenerate);
        assert_eq!(p.probs, vec![0.5, 0.5]);

        let mut rng = seeded(3);
        let b = DMatrix::from_fn(3, 10, |_, _| rng.random_range(0.01..1.0));
        let w = [0.3, 1.7, 0.9];
        for t in 0..10 {
            let p = shot_type_posterior(t, &w, &b);
            let brute: Vec<f64> = (0..3)
                .map(|k| w[k] * b[(k, t)] / (0..3).map(|j| w[j] * b[(j, t)]).sum::<f64>())
                .collect();
            for (got, want) in p.probs.iter().zip(&brute) {
                assert!((got - want).abs() < 1e-12);
            }
            assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_cases() {
        let one = TypePosterior {
            probs: vec![1.0],
            degenerate: false,
        };
        assert_eq!(predict_fg_pct(&one, &[0.0]), 0.5);
        let mass = TypePosterior {
            probs: vec![1.0, 0.0],
            degenerate: false,
        };
        assert!((predict_fg_pct(&mass, &[2.0, -5.0]) - 0.880_797_077_977_882_3).abs() < 1e-12);
        let mix = TypePosterior {
            probs: vec![0.2, 0.5, 0.3],
            degenerate: false,
        };
        let logits = [1.0, -2.0, 0.3];
        let p = predict_fg_pct(&mix, &logits);
        assert!(p > logistic(-2.0) && p < logistic(1.0));
    }

    #[test]
    fn sigma_draw_moments() {
        let (shape, rate) = sigma_posterior_params(&[1.0, 2.0, 3.0], 2.0, 0.1, 0.1);
        assert!((shape - 1.6).abs() < 1e-15 && (rate - 1.1).abs() < 1e-15);
        let (shape, rate) = sigma_posterior_params(&[0.5; 4], 0.5, 0.1, 0.1);
        assert!((shape - 2.1).abs() < 1e-15 && rate == 0.1);

        let mut rng = seeded(8);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| gibbs_sigma_update(&[1.0, -1.0, 1.0], 0.0, 0.1, 0.1, &mut rng))
            .collect();
        assert!(draws.iter().all(|&d| d > 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.6 / 0.6).abs() < 0.02 * 1.6 / 0.6, "mean {mean}");
    }

    #[test]
    fn types_follow_posterior() {
        let loadings = AdjustedLoadings {
            weights: DMatrix::from_row_slice(1, 3, &[0.2, 0.5, 0.3]),
            bases: DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]),
            kept: vec![0, 1, 2],
        };
        let shots = vec![
            ObservedShot {
                player: 0,
                tile: 0,
                made: true
            };
            10_000
        ];
        let types = sample_shot_types(&shots, &loadings, &mut seeded(1));
        for (k, p) in [0.2, 0.5, 0.3].iter().enumerate() {
            let f = types.iter().filter(|&&t| t == k).count() as f64 / 1e4;
            assert!((f - p).abs() < 3.0 * (p * (1.0 - p) / 1e4f64).sqrt(), "{k}: {f}");
        }

        let point = AdjustedLoadings {
            weights: DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]),
            ..loadings.clone()
        };
        assert!(sample_shot_types(&shots[..100], &point, &mut seeded(2)).iter().all(|&t| t == 1));
        let single = AdjustedLoadings {
            weights: DMatrix::from_row_slice(1, 1, &[4.0]),
            bases: DMatrix::from_row_slice(1, 2, &[0.5, 0.5]),
            kept: vec![0],
        };
        assert!(sample_shot_types(&shots[..100], &single, &mut seeded(2)).iter().all(|&t| t == 0));
    }

    #[test]
    fn beta_step_without_data_targets_prior() {
        let mut state = EfficiencyModel::new(3, 2, LvmPrior::default());
        let tallies = TypeTallies::new(3, 2);
        let mut rng = seeded(4);
        let mut b0 = Vec::new();
        for _ in 0..20_000 {
            gibbs_beta_step(&mut state, &tallies, &mut rng);
            b0.push(state.beta0[0]);
        }
        let m = b0.iter().sum::<f64>() / b0.len() as f64;
        assert!(m.abs() < 4.0 * batch_se(&b0), "mean {m}");
    }

    #[test]
    fn beta_step_matches_one_dimensional_integration() {
        // one player, one basis, 70 of 100; σ² held at 100 so β ~ N(0, 200)
        let var = 200.0;
        let (att, made) = (100.0, 70.0);
        let log_post = |b: f64| -0.5 * b * b / var + made * log_logistic(b) + (att - made) * log_logistic(-b);
        let (mut num, mut den) = (0.0, 0.0);
        let h = 1e-4;
        let mut b = -10.0;
        while b <= 10.0 {
            let w = log_post(b).exp();
            num += w * logistic(b);
            den += w;
            b += h;
        }
        let exact = num / den;

        let mut state = EfficiencyModel::new(1, 1, LvmPrior::default());
        state.sigma2 = vec![100.0];
        let mut tallies = TypeTallies::new(1, 1);
        tallies.attempts[(0, 0)] = att;
        tallies.makes[(0, 0)] = made;
        let mut rng = seeded(5);
        for _ in 0..1000 {
            gibbs_beta_step(&mut state, &tallies, &mut rng);
        }
        let draws: Vec<f64> = (0..40_000)
            .map(|_| {
                gibbs_beta_step(&mut state, &tallies, &mut rng);
                logistic(state.beta[(0, 0)])
            })
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((m - exact).abs() < 3.0 * batch_se(&draws), "{m} vs {exact}");
    }

    #[test]
    fn sparse_players_shrink_to_the_global_mean() {
        // player 0 has no shots of the basis, players 1..4 shoot a lot
        let mut tallies = TypeTallies::new(5, 1);
        for (n, rate) in [(1, 0.4), (2, 0.45), (3, 0.5), (4, 0.75)] {
            tallies.attempts[(n, 0)] = 400.0;
            tallies.makes[(n, 0)] = 400.0 * rate;
        }
        let mut state = EfficiencyModel::new(5, 1, LvmPrior::default());
        let mut rng = seeded(6);
        let (mut dev0, mut dev4) = (0.0, 0.0);
        let sweeps = 6000;
        for s in 0..sweeps {
            gibbs_beta_step(&mut state, &tallies, &mut rng);
            let col: Vec<f64> = state.beta.column(0).iter().copied().collect();
            state.sigma2[0] = gibbs_sigma_update(&col, state.beta0[0], 0.1, 0.1, &mut rng);
            if s >= 1000 {
                dev0 += state.beta[(0, 0)] - state.beta0[0];
                dev4 += state.beta[(4, 0)] - state.beta0[0];
            }
        }
        let kept = (sweeps - 1000) as f64;
        assert!((dev0 / kept).abs() < (dev4 / kept).abs(), "{} {}", dev0 / kept, dev4 / kept);
    }

    #[test]
    fn surfaces() {
        let grid = CourtGrid::new(3.0, 1.0, 1.0).unwrap();
        let loadings = AdjustedLoadings {
            weights: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            bases: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 0.6, 0.4]),
            kept: vec![0, 1],
        };
        let mut model = EfficiencyModel::new(1, 2, LvmPrior::default());
        let s = efficiency_surface(0, &grid, &loadings, &model).unwrap();
        assert!(s.global.iter().all(|&p| p == 0.5));
        assert_eq!(s.player, s.global);

        model.beta = DMatrix::from_row_slice(1, 2, &[1.2, -0.7]);
        model.beta0 = vec![0.3, 0.1];
        let s = efficiency_surface(0, &grid, &loadings, &model).unwrap();
        assert!((s.player[0] - logistic(1.2)).abs() < 1e-15);
        assert!((s.player[1] - logistic(-0.7)).abs() < 1e-15);
        assert!(s.player.iter().chain(&s.global).all(|&p| p > 0.0 && p < 1.0));
        assert!(efficiency_surface(1, &grid, &loadings, &model).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn predictions_are_probabilities_and_loadings_preserve_reconstruction(
            n in 1usize..5, k in 1usize..5, v in 1usize..9, seed in 0u64..1000,
        ) {
            let mut rng = seeded(seed);
            let w = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.01..2.0));
            let b = DMatrix::from_fn(k, v, |_, _| rng.random_range(0.01..2.0));
            let adj = adjust_matrices(&w, &b);
            let rebuilt = &adj.weights * &adj.bases;
            let original = &w * &b;
            prop_assert!((rebuilt - &original).abs().max() <= 1e-9 * original.abs().max());
            let logits: Vec<f64> = (0..adj.n_bases()).map(|_| rng.random_range(-40.0..40.0)).collect();
            for p in 0..n {
                for t in 0..v {
                    let row: Vec<f64> = adj.weights.row(p).iter().copied().collect();
                    let post = shot_type_posterior(t, &row, &adj.bases);
                    prop_assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    let y = predict_fg_pct(&post, &logits);
                    prop_assert!((0.0..=1.0).contains(&y));
                }
            }
        }
    }
}
