//! Court geometry, shot records, count matrices and holdout splitting.
//!
//! Tiles are half-open squares `[a, a + tile)` laid out row-major with `x`
//! varying fastest. Points on the far court edges fold into the last
//! tile along that axis, so every point of the closed court rectangle maps
//! to exactly one tile.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Default minimum number of attempts for a player to be kept.
pub const DEFAULT_MIN_ATTEMPTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ShotEvent {
    pub player: String,
    pub x: f64,
    pub y: f64,
    pub made: bool,
}

impl ShotEvent {
    pub fn new(player: impl Into<String>, x: f64, y: f64, made: bool) -> Self {
        ShotEvent {
            player: player.into(),
            x,
            y,
            made,
        }
    }
}

/// Rectangular discretization of the half court.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CourtGrid {
    pub width: f64,
    pub length: f64,
    /// Tile extent along x.
    pub tile_width: f64,
    /// Tile extent along y.
    pub tile_length: f64,
}

impl Default for CourtGrid {
    fn default() -> Self {
        CourtGrid {
            width: 35.0,
            length: 50.0,
            tile_width: 1.0,
            tile_length: 1.0,
        }
    }
}

impl fmt::Display for CourtGrid {
    /// `grid W L T` for square tiles, `grid W L TX TY` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid {} {} {}", self.width, self.length, self.tile_width)?;
        if self.tile_length != self.tile_width {
            write!(f, " {}", self.tile_length)?;
        }
        Ok(())
    }
}

impl CourtGrid {
    /// Grid of square tiles.
    pub fn new(width: f64, length: f64, tile_size: f64) -> Result<Self> {
        CourtGrid::with_tiles(width, length, tile_size, tile_size)
    }

    pub fn with_tiles(width: f64, length: f64, tile_width: f64, tile_length: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(width) || !ok(length) || !ok(tile_width) || !ok(tile_length) {
            return Err(Error::InvalidGrid(format!(
                "width {width}, length {length} and tile sizes {tile_width} x {tile_length} must be finite and positive"
            )));
        }
        Ok(CourtGrid {
            width,
            length,
            tile_width,
            tile_length,
        })
    }

    /// The 14 x 25 grid (2.5 ft by 2 ft tiles, V = 350) used for desk-scale experiments.
    pub fn coarse() -> Self {
        CourtGrid {
            width: 35.0,
            length: 50.0,
            tile_width: 2.5,
            tile_length: 2.0,
        }
    }

    pub fn nx(&self) -> usize {
        (self.width / self.tile_width).ceil() as usize
    }

    pub fn ny(&self) -> usize {
        (self.length / self.tile_length).ceil() as usize
    }

    /// Number of tiles `V`.
    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tile area `ΔA`.
    pub fn tile_area(&self) -> f64 {
        self.tile_width * self.tile_length
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.length).contains(&y)
    }

    pub fn tile_index(&self, x: f64, y: f64) -> Result<usize> {
        if !self.contains(x, y) {
            return Err(Error::OutOfCourt {
                x,
                y,
                width: self.width,
                length: self.length,
            });
        }
        let col = ((x / self.tile_width).floor() as usize).min(self.nx() - 1);
        let row = ((y / self.tile_length).floor() as usize).min(self.ny() - 1);
        Ok(row * self.nx() + col)
    }

    /// `(column, row)` of a tile id.
    pub fn tile_coords(&self, tile: usize) -> (usize, usize) {
        (tile % self.nx(), tile / self.nx())
    }

    pub fn tile_center(&self, tile: usize) -> [f64; 2] {
        let (col, row) = self.tile_coords(tile);
        [
            (col as f64 + 0.5) * self.tile_width,
            (row as f64 + 0.5) * self.tile_length,
        ]
    }

    /// Tile bounds clipped to the court: `(x0, x1, y0, y1)`.
    pub fn tile_bounds(&self, tile: usize) -> (f64, f64, f64, f64) {
        let (col, row) = self.tile_coords(tile);
        let x0 = col as f64 * self.tile_width;
        let y0 = row as f64 * self.tile_length;
        (
            x0,
            (x0 + self.tile_width).min(self.width),
            y0,
            (y0 + self.tile_length).min(self.length),
        )
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|t| self.tile_center(t)).collect()
    }
}

/// Per-player, per-tile shot counts. Rows follow `players`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub grid: CourtGrid,
    pub players: Vec<String>,
    counts: Vec<u32>,
}

impl CountMatrix {
    pub fn from_rows(grid: CourtGrid, players: Vec<String>, rows: Vec<Vec<u32>>) -> Result<Self> {
        let v = grid.len();
        if rows.len() != players.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", players.len()),
                found: format!("{} rows", rows.len()),
            });
        }
        let mut counts = Vec::with_capacity(rows.len() * v);
        for row in rows {
            if row.len() != v {
                return Err(Error::ShapeMismatch {
                    expected: format!("{v} columns"),
                    found: format!("{} columns", row.len()),
                });
            }
            counts.extend(row);
        }
        Ok(CountMatrix {
            grid,
            players,
            counts,
        })
    }

    /// Counts over a fixed player list; shots of unlisted players are ignored.
    pub fn for_players(shots: &[ShotEvent], grid: CourtGrid, players: &[String]) -> Result<Self> {
        let v = grid.len();
        let lookup: IndexMap<&str, usize> = players
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let mut counts = vec![0u32; players.len() * v];
        for s in shots {
            if let Some(&row) = lookup.get(s.player.as_str()) {
                counts[row * v + grid.tile_index(s.x, s.y)?] += 1;
            }
        }
        Ok(CountMatrix {
            grid,
            players: players.to_vec(),
            counts,
        })
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_tiles(&self) -> usize {
        self.grid.len()
    }

    pub fn row(&self, n: usize) -> &[u32] {
        let v = self.n_tiles();
        &self.counts[n * v..(n + 1) * v]
    }

    pub fn get(&self, n: usize, v: usize) -> u32 {
        self.row(n)[v]
    }

    pub fn row_total(&self, n: usize) -> u64 {
        self.row(n).iter().map(|&c| c as u64).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let v = self.n_tiles();
        DMatrix::from_fn(self.n_players(), v, |n, t| self.counts[n * v + t] as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "# {}", self.grid).map_err(io)?;
        for (n, player) in self.players.iter().enumerate() {
            write!(out, "{player}").map_err(io)?;
            for c in self.row(n) {
                write!(out, ",{c}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, "missing grid header"))?
            .map_err(|e| Error::io(path, e))?;
        let grid = parse_grid_header(&header).ok_or_else(|| Error::parse(path, "bad grid header"))?;
        let mut players = Vec::new();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let player = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| f.trim().parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 2)))?;
            players.push(player);
            rows.push(row);
        }
        CountMatrix::from_rows(grid, players, rows)
    }
}

pub(crate) fn parse_grid_header(line: &str) -> Option<CourtGrid> {
    let rest = line.trim().strip_prefix('#')?.trim().strip_prefix("grid")?;
    let vals: Vec<f64> = rest
        .split_whitespace()
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    match vals[..] {
        [w, l, t] => CourtGrid::new(w, l, t).ok(),
        [w, l, tx, ty] => CourtGrid::with_tiles(w, l, tx, ty).ok(),
        _ => None,
    }
}

/// Group shots by player in order of first appearance.
pub fn group_by_player(shots: &[ShotEvent]) -> IndexMap<&str, Vec<&ShotEvent>> {
    let mut groups: IndexMap<&str, Vec<&ShotEvent>> = IndexMap::new();
    for s in shots {
        groups.entry(s.player.as_str()).or_default().push(s);
    }
    groups
}

/// Count matrix over all players with at least `min_attempts` shots.
pub fn build_count_matrix(
    shots: &[ShotEvent],
    grid: CourtGrid,
    min_attempts: usize,
) -> Result<CountMatrix> {
    if shots.is_empty() {
        return Err(Error::EmptyInput);
    }
    for s in shots {
        grid.tile_index(s.x, s.y)?;
    }
    let players: Vec<String> = group_by_player(shots)
        .into_iter()
        .filter(|(_, g)| g.len() >= min_attempts)
        .map(|(p, _)| p.to_string())
        .collect();
    if players.is_empty() {
        return Err(Error::NoQualifyingPlayers {
            minimum: min_attempts,
        });
    }
    CountMatrix::for_players(shots, grid, &players)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoldoutSplit {
    pub train: Vec<ShotEvent>,
    pub test: Vec<ShotEvent>,
}

/// Number of shots held out of a player's `total`.
pub fn holdout_size(total: usize, fraction: f64) -> usize {
    if total < 2 {
        return 0;
    }
    ((fraction * total as f64).round() as usize).clamp(1, total - 1)
}

/// Per-player uniform split without replacement. Input order is preserved
/// within both halves.
pub fn split_holdout(shots: &[ShotEvent], fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {fraction} must lie in (0, 1)"
        )));
    }
    let mut is_test = vec![false; shots.len()];
    let mut positions: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (i, s) in shots.iter().enumerate() {
        positions.entry(s.player.as_str()).or_default().push(i);
    }
    for (p, (_, idx)) in positions.iter().enumerate() {
        let held = holdout_size(idx.len(), fraction);
        let mut rng = stream_rng(seed, Stream::Split, p as u64);
        for j in index::sample(&mut rng, idx.len(), held) {
            is_test[idx[j]] = true;
        }
    }
    let mut split = HoldoutSplit::default();
    for (s, test) in shots.iter().zip(is_test) {
        if test {
            split.test.push(s.clone());
        } else {
            split.train.push(s.clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Serialize, Deserialize)]
struct ShotRecord {
    player: String,
    x: f64,
    y: f64,
    made: u8,
}

/// Read a `player,x,y,made` CSV, rejecting out-of-court locations.
pub fn read_shots_csv(path: &Path, grid: &CourtGrid) -> Result<Vec<ShotEvent>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut shots = Vec::new();
    for (i, rec) in reader.deserialize::<ShotRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let made = match rec.made {
            0 => false,
            1 => true,
            other => {
                return Err(Error::parse(
                    path,
                    format!("row {}: made must be 0 or 1, found {other}", i + 2),
                ))
            }
        };
        grid.tile_index(rec.x, rec.y)?;
        shots.push(ShotEvent::new(rec.player, rec.x, rec.y, made));
    }
    Ok(shots)
}

pub fn write_shots_csv(path: &Path, shots: &[ShotEvent]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for s in shots {
        writer
            .serialize(ShotRecord {
                player: s.player.clone(),
                x: s.x,
                y: s.y,
                made: s.made as u8,
            })
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_grid_has_1750_tiles() {
        let g = CourtGrid::default();
        assert_eq!(g.len(), 1750);
        assert_eq!(g.tile_area(), 1.0);
        let coarse = CourtGrid::coarse();
        assert_eq!((coarse.nx(), coarse.ny(), coarse.len()), (14, 25, 350));
        assert_eq!(coarse.tile_area(), 5.0);
        assert_eq!(coarse.to_string(), "grid 35 50 2.5 2");
        assert_eq!(parse_grid_header("# grid 35 50 2.5 2"), Some(coarse));
    }

    #[test]
    fn tile_index_examples() {
        let g = CourtGrid::default();
        assert_eq!(g.tile_index(0.5, 0.5).unwrap(), 0);
        assert_eq!(g.tile_index(34.5, 49.5).unwrap(), 1749);
        assert_eq!(g.tile_index(1.0, 0.0).unwrap(), 1);
        // far edges fold into the last tile
        assert_eq!(g.tile_index(35.0, 50.0).unwrap(), 1749);
        assert_eq!(g.tile_index(35.0, 0.0).unwrap(), 34);
    }

    #[test]
    fn tile_index_matches_brute_force_bounds() {
        let g = CourtGrid::new(7.0, 5.0, 1.5).unwrap();
        let probe = [0.0, 0.3, 1.5, 2.99, 3.0, 4.5, 5.0, 6.0, 7.0];
        for &x in &probe {
            for &y in probe.iter().filter(|&&y| y <= 5.0) {
                let hits: Vec<usize> = (0..g.len())
                    .filter(|&t| {
                        let (x0, x1, y0, y1) = g.tile_bounds(t);
                        let in_x = x >= x0 && (x < x1 || (x1 == g.width && x == x1));
                        let in_y = y >= y0 && (y < y1 || (y1 == g.length && y == y1));
                        in_x && in_y
                    })
                    .collect();
                assert_eq!(hits.len(), 1, "({x}, {y})");
                assert_eq!(g.tile_index(x, y).unwrap(), hits[0]);
            }
        }
    }

    #[test]
    fn out_of_court_is_rejected() {
        let g = CourtGrid::default();
        let err = g.tile_index(35.5, 2.0).unwrap_err();
        assert!(err.to_string().contains("35.5"));
        assert!(g.tile_index(-0.1, 2.0).is_err());
        assert!(g.tile_index(1.0, f64::NAN).is_err());
    }

    #[test]
    fn single_shot_matrix() {
        let shots = vec![ShotEvent::new("a", 0.5, 0.5, true)];
        let m = build_count_matrix(&shots, CourtGrid::default(), 1).unwrap();
        assert_eq!(m.n_players(), 1);
        assert_eq!(m.n_tiles(), 1750);
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn minimum_attempt_filter() {
        let mut shots: Vec<_> = (0..49).map(|_| ShotEvent::new("low", 3.0, 3.0, false)).collect();
        shots.extend((0..50).map(|_| ShotEvent::new("ok", 3.0, 3.0, false)));
        let m = build_count_matrix(&shots, CourtGrid::default(), DEFAULT_MIN_ATTEMPTS).unwrap();
        assert_eq!(m.players, vec!["ok".to_string()]);
        assert!(matches!(
            build_count_matrix(&shots[..49], CourtGrid::default(), 50),
            Err(Error::NoQualifyingPlayers { .. })
        ));
        assert!(matches!(
            build_count_matrix(&[], CourtGrid::default(), 1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn row_sums_match_per_player_counts() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(3);
        let g = CourtGrid::default();
        let mut shots = Vec::new();
        for p in ["a", "b", "c"] {
            for _ in 0..100 {
                shots.push(ShotEvent::new(p, rng.random_range(0.0..=35.0), rng.random_range(0.0..=50.0), false));
            }
        }
        let m = build_count_matrix(&shots, g, 1).unwrap();
        for n in 0..3 {
            assert_eq!(m.row_total(n), 100);
            // direct iteration
            for t in (0..g.len()).step_by(97) {
                let direct = shots
                    .iter()
                    .filter(|s| s.player == m.players[n] && g.tile_index(s.x, s.y).unwrap() == t)
                    .count() as u32;
                assert_eq!(m.get(n, t), direct);
            }
        }
    }

    #[test]
    fn holdout_examples() {
        let shots: Vec<_> = (0..100).map(|i| ShotEvent::new("a", (i % 35) as f64, 1.0, false)).collect();
        let s = split_holdout(&shots, 0.1, 11).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (90, 10));

        let two = vec![ShotEvent::new("b", 1.0, 1.0, true), ShotEvent::new("b", 2.0, 1.0, false)];
        let s = split_holdout(&two, 0.5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));

        let one = vec![ShotEvent::new("c", 1.0, 1.0, true)];
        let s = split_holdout(&one, 0.1, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 0));

        assert_eq!(split_holdout(&shots, 0.1, 5).unwrap(), split_holdout(&shots, 0.1, 5).unwrap());
        assert!(split_holdout(&shots, 1.0, 5).is_err());
    }

    #[test]
    fn count_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = CourtGrid::new(5.0, 5.0, 2.5).unwrap();
        let m = CountMatrix::from_rows(g, vec!["x".into(), "y".into()], vec![vec![1, 0, 2, 3], vec![0, 0, 0, 9]]).unwrap();
        let path = dir.path().join("c.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# grid 5 5 2.5\nx,1,0,2,3\n"));
        assert_eq!(CountMatrix::read_csv(&path).unwrap(), m);
    }

    #[test]
    fn shot_csv_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "player,x,y,made\na,1.5,2,1\nb,3,4,0\n").unwrap();
        let shots = read_shots_csv(&path, &CourtGrid::default()).unwrap();
        assert_eq!(shots, vec![ShotEvent::new("a", 1.5, 2.0, true), ShotEvent::new("b", 3.0, 4.0, false)]);
        std::fs::write(&path, "player,x,y,made\na,1.5,2,2\n").unwrap();
        assert!(read_shots_csv(&path, &CourtGrid::default()).is_err());
        std::fs::write(&path, "player,x,y,made\na,40,2,1\n").unwrap();
        assert!(matches!(read_shots_csv(&path, &CourtGrid::default()), Err(Error::OutOfCourt { .. })));
    }

    proptest! {
        #[test]
        fn tile_index_is_total_and_counts_are_conserved(
            pts in proptest::collection::vec((0.0f64..=35.0, 0.0f64..=50.0, 0usize..4), 1..200),
            tile in prop_oneof![Just(1.0f64), Just(2.5), Just(3.0), Just(7.0)],
        ) {
            let g = CourtGrid::new(35.0, 50.0, tile).unwrap();
            let shots: Vec<_> = pts.iter().map(|&(x, y, p)| ShotEvent::new(format!("p{p}"), x, y, false)).collect();
            for s in &shots {
                prop_assert!(g.tile_index(s.x, s.y).unwrap() < g.len());
            }
            let m = build_count_matrix(&shots, g, 1).unwrap();
            prop_assert_eq!(m.total(), shots.len() as u64);
        }

        #[test]
        fn split_is_a_partition(sizes in proptest::collection::vec(1usize..40, 1..6), frac in 0.05f64..0.95, seed in any::<u64>()) {
            let mut shots = Vec::new();
            for (p, &m) in sizes.iter().enumerate() {
                for i in 0..m {
                    shots.push(ShotEvent::new(format!("p{p}"), i as f64 * 0.5, 1.0, false));
                }
            }
            let s = split_holdout(&shots, frac, seed).unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), shots.len());
            for (p, &m) in sizes.iter().enumerate() {
                let id = format!("p{p}");
                let test: Vec<_> = s.test.iter().filter(|x| x.player == id).collect();
                let train: Vec<_> = s.train.iter().filter(|x| x.player == id).collect();
                prop_assert_eq!(test.len(), holdout_size(m, frac));
                prop_assert_eq!(test.len() + train.len(), m);
                for t in &test {
                    prop_assert!(!train.iter().any(|r| r.x == t.x));
                }
            }
        }
    }
}
