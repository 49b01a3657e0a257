//! Elliptical slice sampling for latent vectors with a zero-mean Gaussian
//! prior.

use std::f64::consts::TAU;

use rand::Rng;

use crate::kernel::GaussianPrior;

/// Bracket shrinks before giving up and keeping the current state. The
/// current state always satisfies the slice, so this only bounds work when
/// the likelihood is pathological.
const MAX_SHRINKS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssStep {
    /// Log-likelihood of the returned state.
    pub loglik: f64,
    /// Log slice threshold the returned state exceeds.
    pub threshold: f64,
    /// Number of likelihood evaluations spent.
    pub proposals: usize,
}

/// One elliptical slice update of `state` in place.
///
/// `current_loglik` must be `loglik(state)` and finite. Proposals with a
/// non-finite log-likelihood count as rejections.
pub fn ess_step<P, F, R>(
    state: &mut [f64],
    current_loglik: f64,
    prior: &P,
    mut loglik: F,
    rng: &mut R,
) -> EssStep
where
    P: GaussianPrior + ?Sized,
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    debug_assert_eq!(state.len(), prior.dim());
    let nu = prior.sample(rng);
    let u: f64 = rng.random();
    let threshold = current_loglik + u.ln();

    let mut theta = rng.random::<f64>() * TAU;
    let (mut lo, mut hi) = (theta - TAU, theta);
    let mut proposal = vec![0.0; state.len()];
    for proposals in 1..=MAX_SHRINKS {
        let (s, c) = theta.sin_cos();
        for ((p, &z), &n) in proposal.iter_mut().zip(state.iter()).zip(&nu) {
            *p = z * c + n * s;
        }
        let ll = loglik(&proposal);
        if ll.is_finite() && ll > threshold {
            state.copy_from_slice(&proposal);
            return EssStep {
                loglik: ll,
                threshold,
                proposals,
            };
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        theta = lo + rng.random::<f64>() * (hi - lo);
    }
    EssStep {
        loglik: current_loglik,
        threshold,
        proposals: MAX_SHRINKS,
    }
}
