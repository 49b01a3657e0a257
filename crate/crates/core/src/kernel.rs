//! Squared-exponential Gaussian field prior over tile centers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::court::CourtGrid;
use crate::error::{Error, Result};

/// Factorization retries, each multiplying the jitter by ten.
const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    /// Marginal variance `σ²`.
    pub variance: f64,
    /// Length-scale `φ`, in feet.
    pub length_scale: f64,
}

impl Default for KernelHyper {
    fn default() -> Self {
        KernelHyper {
            variance: 1.0,
            length_scale: 5.0,
        }
    }
}

impl KernelHyper {
    pub fn new(variance: f64, length_scale: f64) -> Result<Self> {
        let hyper = KernelHyper {
            variance,
            length_scale,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variance > 0.0 && self.length_scale > 0.0 && self.variance.is_finite() && self.length_scale.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "kernel variance {} and length-scale {} must be positive",
                self.variance, self.length_scale
            )))
        }
    }

    /// Default diagonal jitter, `1e-6 σ²`.
    pub fn default_jitter(&self) -> f64 {
        1e-6 * self.variance
    }
}

/// `σ² exp(-½ ‖a - b‖² / φ²)`.
pub fn sq_exp_cov(a: [f64; 2], b: [f64; 2], hyper: &KernelHyper) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    hyper.variance * (-0.5 * (dx * dx + dy * dy) / (hyper.length_scale * hyper.length_scale)).exp()
}

pub fn cov_matrix(grid: &CourtGrid, hyper: &KernelHyper) -> DMatrix<f64> {
    let centers = grid.centers();
    let v = centers.len();
    DMatrix::from_fn(v, v, |i, j| sq_exp_cov(centers[i], centers[j], hyper))
}

/// A zero-mean Gaussian that can be sampled; the prior side of an
/// elliptical slice update.
pub trait GaussianPrior {
    fn dim(&self) -> usize;

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Lower Cholesky factor of `K + jitter I`. Immutable once built.
#[derive(Debug, Clone)]
pub struct CovFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CovFactor {
    /// Factorize an arbitrary symmetric matrix, retrying with growing jitter.
    pub fn from_covariance(cov: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if !(jitter >= 0.0) {
            return Err(Error::InvalidParameter(format!("jitter {jitter} must be non-negative")));
        }
        let mut jitter = jitter;
        for attempt in 0..=JITTER_RETRIES {
            if attempt > 0 {
                jitter *= 10.0;
            }
            let mut k = cov.clone();
            for i in 0..k.nrows() {
                k[(i, i)] += jitter;
            }
            if let Some(chol) = k.cholesky() {
                let lower = chol.unpack();
                if lower.diagonal().iter().all(|&d| d > 0.0) {
                    return Ok(CovFactor { lower, jitter });
                }
            }
            log::debug!("cholesky failed with jitter {jitter:e}");
        }
        Err(Error::NotPositiveDefinite { jitter })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Jitter that was finally added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

impl GaussianPrior for CovFactor {
    fn dim(&self) -> usize {
        self.lower.nrows()
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let v = self.dim();
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..v {
            let e: f64 = rng.sample(StandardNormal);
            let col = self.lower.column(j);
            for i in j..v {
                out[i] += col[i] * e;
            }
        }
    }
}

pub fn build_cov_factor(grid: &CourtGrid, hyper: &KernelHyper, jitter: f64) -> Result<CovFactor> {
    hyper.validate()?;
    CovFactor::from_covariance(cov_matrix(grid, hyper), jitter)
}

/// Draw `L ε` with `ε` standard normal.
pub fn sample_field<R: Rng + ?Sized>(factor: &CovFactor, rng: &mut R) -> Vec<f64> {
    factor.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        let h = KernelHyper::new(1.0, 1.0).unwrap();
        assert_eq!(sq_exp_cov([3.0, 4.0], [3.0, 4.0], &h), 1.0);
        assert!((sq_exp_cov([0.0, 0.0], [1.0, 0.0], &h) - 0.606_530_659_712_633_4).abs() < 1e-15);
        let h2 = KernelHyper::new(2.5, 3.0).unwrap();
        assert_eq!(sq_exp_cov([1.0, 2.0], [4.0, 7.0], &h2), sq_exp_cov([4.0, 7.0], [1.0, 2.0], &h2));
        assert!(KernelHyper::new(0.0, 1.0).is_err());
        assert!(KernelHyper::new(1.0, -1.0).is_err());
    }

    #[test]
    fn one_tile_factor() {
        let g = CourtGrid::new(1.0, 1.0, 1.0).unwrap();
        let h = KernelHyper::new(2.0, 5.0).unwrap();
        let f = build_cov_factor(&g, &h, 1e-6).unwrap();
        assert!((f.lower()[(0, 0)] - (2.0f64 + 1e-6).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_tiles_with_huge_length_scale() {
        let g = CourtGrid::new(2.0, 1.0, 1.0).unwrap();
        let h = KernelHyper::new(1.0, 1e6).unwrap();
        let jitter = 1e-6;
        let f = build_cov_factor(&g, &h, jitter).unwrap();
        // closed-form 2x2 Cholesky of [[1+j, c], [c, 1+j]]
        let c = sq_exp_cov([0.5, 0.5], [1.5, 0.5], &h);
        assert!(c > 1.0 - 1e-12);
        let l00 = (1.0 + jitter).sqrt();
        let l10 = c / l00;
        let l11 = (1.0 + jitter - l10 * l10).sqrt();
        let l = f.lower();
        assert!((l[(0, 0)] - l00).abs() < 1e-12);
        assert!((l[(1, 0)] - l10).abs() < 1e-12);
        assert!((l[(1, 1)] - l11).abs() < 1e-6);
        assert!(l[(1, 1)] > 0.0);
    }

    #[test]
    fn reconstruction_on_100_tiles() {
        let g = CourtGrid::new(10.0, 10.0, 1.0).unwrap();
        let h = KernelHyper::default();
        let jitter = h.default_jitter();
        let f = build_cov_factor(&g, &h, jitter).unwrap();
        let l = f.lower();
        let recon = l * l.transpose();
        let mut k = cov_matrix(&g, &h);
        for i in 0..k.nrows() {
            k[(i, i)] += f.jitter();
        }
        assert_eq!(f.jitter(), jitter);
        for (a, b) in recon.iter().zip(k.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        for i in 0..k.nrows() {
            assert_eq!(k[(i, i)], 1.0 + jitter);
        }
    }

    #[test]
    fn indefinite_input_reports_last_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match CovFactor::from_covariance(m, 1e-6) {
            Err(Error::NotPositiveDefinite { jitter }) => assert!((jitter - 1e-3).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn samples_have_the_prior_moments() {
        let g = CourtGrid::new(2.0, 2.0, 1.0).unwrap();
        let h = KernelHyper::new(1.5, 1.0).unwrap();
        let f = build_cov_factor(&g, &h, h.default_jitter()).unwrap();
        let mut rng = seeded(42);
        let n = 10_000;
        let mut sum = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let z = sample_field(&f, &mut rng);
            assert_eq!(z.len(), 4);
            for v in 0..4 {
                sum[v] += z[v];
                sq[v] += z[v] * z[v];
            }
        }
        let var_true = 1.5 + f.jitter();
        for v in 0..4 {
            let mean = sum[v] / n as f64;
            let se = (var_true / n as f64).sqrt();
            assert!(mean.abs() < 4.0 * se, "mean {mean}");
            let var = sq[v] / n as f64 - mean * mean;
            assert!((var - var_true).abs() < 0.1 * var_true, "var {var}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = CourtGrid::new(3.0, 3.0, 1.0).unwrap();
        let f = build_cov_factor(&g, &KernelHyper::default(), 1e-6).unwrap();
        assert_eq!(sample_field(&f, &mut seeded(9)), sample_field(&f, &mut seeded(9)));
    }

    proptest! {
        #[test]
        fn covariance_triples_are_psd(
            pts in proptest::collection::vec((0.0f64..35.0, 0.0f64..50.0), 3),
            var in 0.1f64..5.0, ls in 0.5f64..20.0,
        ) {
            let h = KernelHyper::new(var, ls).unwrap();
            let p: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let m = DMatrix::from_fn(3, 3, |i, j| sq_exp_cov(p[i], p[j], &h));
            prop_assert!((m.clone() - m.transpose()).abs().max() == 0.0);
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.min() > -1e-9 * var);
            prop_assert!((0..3).all(|i| m[(i, i)] == var));
        }
    }
}
