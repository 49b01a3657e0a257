//! Elliptical slice sampling on a conjugate normal toy.
//!
//! Prior N(0, 1) with a N(z | 1, 1) likelihood has posterior N(0.5, 0.5).

use courtfactor::ess::ess_step;
use courtfactor::kernel::CovFactor;
use courtfactor::rng::seeded;
use nalgebra::DMatrix;

fn main() -> courtfactor::Result<()> {
    let prior = CovFactor::from_covariance(DMatrix::identity(1, 1), 0.0)?;
    let loglik = |z: &[f64]| -0.5 * (z[0] - 1.0).powi(2);
    let mut rng = seeded(3);
    let mut state = vec![0.0];
    let mut ll = loglik(&state);
    let mut draws = Vec::new();
    let mut proposals = 0;
    for i in 0..21_000 {
        let step = ess_step(&mut state, ll, &prior, loglik, &mut rng);
        ll = step.loglik;
        proposals += step.proposals;
        if i >= 1000 {
            draws.push(state[0]);
        }
    }
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    println!("posterior mean {mean:.4} (exact 0.5), variance {var:.4} (exact 0.5)");
    println!("{:.2} likelihood evaluations per update", proposals as f64 / 21_000.0);
    Ok(())
}
