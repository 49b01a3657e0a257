//! Binary graymap (PGM) heatmaps of surfaces.

use std::path::Path;

use crate::court::CourtGrid;
use crate::error::{Error, Result};

/// Encode `surface` as a binary PGM: one pixel per tile, the first image row
/// is the row of tiles nearest the baseline (`y = 0`).
pub fn encode_pgm(surface: &[f64], grid: &CourtGrid) -> Result<Vec<u8>> {
    if surface.is_empty() {
        return Err(Error::EmptyInput);
    }
    if surface.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} tiles", grid.len()),
            found: format!("{} values", surface.len()),
        });
    }
    if surface.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("surface has non-finite values".into()));
    }
    let min = surface.iter().copied().fold(f64::INFINITY, f64::min);
    let max = surface.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", grid.nx(), grid.ny()).into_bytes();
    out.extend(surface.iter().map(|&v| {
        if max > min {
            (255.0 * (v - min) / (max - min)).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn render_heatmap(surface: &[f64], grid: &CourtGrid, path: &Path) -> Result<()> {
    let bytes = encode_pgm(surface, grid)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(bytes: &[u8]) -> &[u8] {
        // header is three newline-terminated lines
        let mut seen = 0;
        let start = bytes
            .iter()
            .position(|&b| {
                seen += (b == b'\n') as usize;
                seen == 3
            })
            .unwrap();
        &bytes[start + 1..]
    }

    #[test]
    fn examples() {
        let grid = CourtGrid::new(2.0, 1.0, 1.0).unwrap();
        let constant = encode_pgm(&[3.0, 3.0], &grid).unwrap();
        assert_eq!(pixels(&constant), &[0, 0]);
        let two = encode_pgm(&[0.0, 1.0], &grid).unwrap();
        assert_eq!(two, b"P5\n2 1\n255\n\x00\xff");

        let grid = CourtGrid::default();
        let bytes = encode_pgm(&vec![1.0; grid.len()], &grid).unwrap();
        assert!(bytes.starts_with(b"P5\n35 50\n255\n"));
        assert_eq!(pixels(&bytes).len(), 1750);
    }

    #[test]
    fn rounding_and_orientation() {
        let grid = CourtGrid::new(2.0, 2.0, 1.0).unwrap();
        let bytes = encode_pgm(&[0.0, 0.25, 0.5, 1.0], &grid).unwrap();
        // 63.75 and 127.5 round half away from zero
        assert_eq!(pixels(&bytes), &[0, 64, 128, 255]);
        assert!(encode_pgm(&[], &grid).is_err());
        assert!(encode_pgm(&[0.0; 3], &grid).is_err());
        assert!(encode_pgm(&[0.0, f64::NAN, 0.0, 0.0], &grid).is_err());
    }

    #[test]
    fn writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pgm");
        let grid = CourtGrid::new(2.0, 1.0, 1.0).unwrap();
        render_heatmap(&[0.0, 1.0], &grid, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"P5\n2 1\n255\n\x00\xff");
    }
}
