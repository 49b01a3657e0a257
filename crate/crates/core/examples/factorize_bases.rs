//! Smooth a cohort with LGCP fits, factorize with NMF and compare to PCA.
//!
//! `cargo run --release --example factorize_bases`

use courtfactor::court::CountMatrix;
use courtfactor::kernel::{build_cov_factor, KernelHyper};
use courtfactor::lgcp::{fit_players, normalize_unit_volume, LgcpConfig};
use courtfactor::nmf::{fit_nmf, frobenius_loss, IntensityMatrix, Loss, NmfConfig, NmfInput};
use courtfactor::pca::fit_pca;
use courtfactor::synth::{cosine, synthesize, SynthConfig};

fn main() -> courtfactor::Result<()> {
    let data = synthesize(&SynthConfig {
        players: 30,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let t = &data.truth;
    let counts = CountMatrix::for_players(&data.shots, t.grid, &t.players)?;
    let hyper = KernelHyper::default();
    let factor = build_cov_factor(&t.grid, &hyper, hyper.default_jitter())?;
    let fits = fit_players(&counts, &factor, &LgcpConfig { seed: 5, ..LgcpConfig::default() })?;
    let unit = fits
        .iter()
        .map(|f| normalize_unit_volume(&f.surface).map(|(s, _)| s))
        .collect::<courtfactor::Result<Vec<_>>>()?;
    let surfaces = IntensityMatrix::from_surfaces(t.players.clone(), &unit)?;

    let k = t.bases.nrows();
    let model = fit_nmf(NmfInput::Intensity(&surfaces), k, Loss::Kl, &NmfConfig::default())?;
    println!("NMF K={k}: KL loss {:.4e} after {} iterations", model.final_loss, model.iterations);
    for j in 0..k {
        let learned: Vec<f64> = model.bases.row(j).iter().copied().collect();
        let best = (0..k)
            .map(|i| cosine(&learned, &t.bases.row(i).iter().copied().collect::<Vec<_>>()))
            .fold(f64::MIN, f64::max);
        println!("  basis {j}: best cosine to a planted basis {best:.3}");
    }

    let pca = fit_pca(&surfaces.data, k)?;
    let nmf_fro = frobenius_loss(&surfaces.data, &model.reconstruction())?;
    let pca_fro = frobenius_loss(&surfaces.data, &pca.reconstruction())?;
    let negative = pca.components.iter().any(|&v| v < 0.0);
    println!("Frobenius error: PCA {pca_fro:.4e}, NMF {nmf_fro:.4e}");
    println!("PCA explains {:.1}% of variance, has negative entries: {negative}", 100.0 * pca.explained_ratio());
    Ok(())
}
