//! Fit a smooth LGCP intensity surface to one synthetic player and render it.
//!
//! `cargo run --release --example lgcp_surface -- [out.pgm]`

use courtfactor::court::CountMatrix;
use courtfactor::kernel::{build_cov_factor, KernelHyper};
use courtfactor::lgcp::{fit_lgcp, normalize_unit_volume, LgcpConfig};
use courtfactor::render::render_heatmap;
use courtfactor::synth::{synthesize, SynthConfig};
use std::path::PathBuf;

fn main() -> courtfactor::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("courtfactor-lgcp.pgm"));
    let data = synthesize(&SynthConfig {
        players: 1,
        shots_min: 600,
        shots_max: 600,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let grid = data.truth.grid;
    let counts = CountMatrix::for_players(&data.shots, grid, &data.truth.players)?;
    let hyper = KernelHyper::default();
    let factor = build_cov_factor(&grid, &hyper, hyper.default_jitter())?;
    let fit = fit_lgcp(counts.row(0), &grid, &factor, &LgcpConfig { seed: 11, ..LgcpConfig::default() })?;
    let (unit, volume) = normalize_unit_volume(&fit.surface)?;
    let peak = grid.tile_center(unit.argmax());
    println!("{} shots, fitted volume {volume:.1}, bias {:.3}", counts.row_total(0), fit.bias);
    println!("peak intensity at ({:.2}, {:.2}) ft", peak[0], peak[1]);
    println!("{:.2} likelihood evaluations per slice update", fit.mean_proposals);
    render_heatmap(&unit.values, &grid, &out)?;
    println!("heatmap written to {}", out.display());
    Ok(())
}
