//! Random multi-scale block-pair layouts.
//!
//! A pattern fixes, once per run, where the block pairs sit inside every
//! patch: coordinates are drawn from an isotropic Gaussian with variance
//! `(L/5)^2` around the patch center, rounded to integer pixels, and
//! redrawn whenever the block would leave the patch. The same layout is
//! reused for all patches of all images.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Block-center offset relative to the patch center, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Offset {
    pub row: i32,
    pub col: i32,
}

/// Two blocks of the same scale, addressed by their center offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPair {
    pub x: Offset,
    pub y: Offset,
    pub scale: usize,
}

/// The fixed per-patch layout of block pairs, grouped by scale.
///
/// Pairs `[k*pairs_per_scale .. (k+1)*pairs_per_scale)` all carry
/// `scales[k]`. The pattern is a pure function of
/// `(patch_size, scales, pairs_per_scale, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    pub patch_size: usize,
    pub scales: Vec<usize>,
    pub pairs_per_scale: usize,
    pub seed: u64,
    pub pairs: Vec<BlockPair>,
}

impl SamplingPattern {
    pub fn total_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Length of the descriptor this pattern produces: 5 channels per pair.
    pub fn descriptor_len(&self) -> usize {
        5 * self.pairs.len()
    }
}

/// Rows (or columns) covered by an `s`-sized block centered at `center`:
/// inclusive `[center - (s-1)/2, center + s/2]`. For even `s` the center
/// names the upper-left of the two middle cells.
pub fn block_span(center: i32, scale: usize) -> (i32, i32) {
    let lo = center - ((scale as i32 - 1) / 2);
    (lo, lo + scale as i32 - 1)
}

/// Whether an `s`-sized block centered at `offset` lies fully inside an
/// `L x L` patch centered at the origin.
pub fn block_in_patch(offset: Offset, scale: usize, patch_size: usize) -> bool {
    let half = (patch_size / 2) as i32;
    let (r0, r1) = block_span(offset.row, scale);
    let (c0, c1) = block_span(offset.col, scale);
    r0 >= -half && r1 <= half && c0 >= -half && c1 <= half
}

/// One raw (pre-rejection, unrounded) Gaussian block-center coordinate for
/// patches of size `patch_size`; the standard deviation is `patch_size / 5`.
pub fn sample_offset(rng: &mut impl Rng, patch_size: usize) -> f64 {
    let sigma = patch_size as f64 / 5.0;
    Normal::new(0.0, sigma).expect("sigma is finite").sample(rng)
}

fn draw_block(rng: &mut ChaCha8Rng, patch_size: usize, scale: usize) -> Offset {
    loop {
        let row = sample_offset(rng, patch_size).round() as i32;
        let col = sample_offset(rng, patch_size).round() as i32;
        let offset = Offset { row, col };
        if block_in_patch(offset, scale, patch_size) {
            return offset;
        }
    }
}

/// Draws a deterministic pattern: for each scale in order, `pairs_per_scale`
/// pairs; per pair the x block then the y block, row coordinate before
/// column. Draws whose block leaves the patch are rejected and redrawn.
pub fn sample_pattern(
    patch_size: usize,
    scales: &[usize],
    pairs_per_scale: usize,
    seed: u64,
) -> Result<SamplingPattern> {
    if patch_size % 2 == 0 || patch_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "patch size must be odd, got {patch_size}"
        )));
    }
    if scales.is_empty() || pairs_per_scale == 0 {
        return Err(Error::InvalidArgument(
            "need at least one scale and one pair per scale".into(),
        ));
    }
    for &s in scales {
        if s == 0 || s > patch_size {
            return Err(Error::InvalidArgument(format!(
                "scale {s} does not fit a patch of size {patch_size}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(scales.len() * pairs_per_scale);
    for &scale in scales {
        for _ in 0..pairs_per_scale {
            let x = draw_block(&mut rng, patch_size, scale);
            let y = draw_block(&mut rng, patch_size, scale);
            pairs.push(BlockPair { x, y, scale });
        }
    }
    Ok(SamplingPattern {
        patch_size,
        scales: scales.to_vec(),
        pairs_per_scale,
        seed,
        pairs,
    })
}

/// Writes a pattern as plain text: header `L N_s N_b seed`, then one
/// `s x_row x_col y_row y_col` line per pair.
pub fn save_pattern(pattern: &SamplingPattern, path: &Path) -> Result<()> {
    let mut out = format!(
        "{} {} {} {}\n",
        pattern.patch_size,
        pattern.scales.len(),
        pattern.pairs_per_scale,
        pattern.seed
    );
    for p in &pattern.pairs {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            p.scale, p.x.row, p.x.col, p.y.row, p.y.col
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a pattern file, validating the scale grouping and the
/// inside-patch invariant of every pair.
pub fn load_pattern(path: &Path) -> Result<SamplingPattern> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty pattern file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 4 {
        return Err(Error::parse(path, 1, "expected header `L N_s N_b seed`"));
    }
    let patch_size: usize = parse_field(path, 1, head[0], "patch size")?;
    let n_scales: usize = parse_field(path, 1, head[1], "scale count")?;
    let pairs_per_scale: usize = parse_field(path, 1, head[2], "pairs per scale")?;
    let seed: u64 = parse_field(path, 1, head[3], "seed")?;

    let mut pairs = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                "expected `s x_row x_col y_row y_col`",
            ));
        }
        let scale: usize = parse_field(path, line_no, f[0], "scale")?;
        let pair = BlockPair {
            x: Offset {
                row: parse_field(path, line_no, f[1], "x row")?,
                col: parse_field(path, line_no, f[2], "x col")?,
            },
            y: Offset {
                row: parse_field(path, line_no, f[3], "y row")?,
                col: parse_field(path, line_no, f[4], "y col")?,
            },
            scale,
        };
        if !block_in_patch(pair.x, scale, patch_size) || !block_in_patch(pair.y, scale, patch_size)
        {
            return Err(Error::parse(
                path,
                line_no,
                format!("block pair leaves the {patch_size}x{patch_size} patch"),
            ));
        }
        pairs.push(pair);
    }
    if pairs.len() != n_scales * pairs_per_scale {
        return Err(Error::parse(
            path,
            1,
            format!(
                "header promises {} pairs ({} scales x {}), file has {}",
                n_scales * pairs_per_scale,
                n_scales,
                pairs_per_scale,
                pairs.len()
            ),
        ));
    }
    // scale grouping: every chunk of pairs_per_scale shares one scale
    let mut scales = Vec::with_capacity(n_scales);
    for (k, chunk) in pairs.chunks(pairs_per_scale).enumerate() {
        let s = chunk[0].scale;
        if chunk.iter().any(|p| p.scale != s) {
            return Err(Error::parse(
                path,
                2 + k * pairs_per_scale,
                "pairs within a scale group must share one scale",
            ));
        }
        scales.push(s);
    }
    Ok(SamplingPattern {
        patch_size,
        scales,
        pairs_per_scale,
        seed,
        pairs,
    })
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what}: `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_has_sixteen_interior_pairs() {
        let p = sample_pattern(15, &[1, 2, 3, 4], 4, 7).unwrap();
        assert_eq!(p.total_pairs(), 16);
        assert_eq!(p.descriptor_len(), 80);
        for (k, chunk) in p.pairs.chunks(4).enumerate() {
            for pair in chunk {
                assert_eq!(pair.scale, k + 1);
                assert!(block_in_patch(pair.x, pair.scale, 15));
                assert!(block_in_patch(pair.y, pair.scale, 15));
            }
        }
    }

    #[test]
    fn pattern_is_deterministic_in_seed() {
        let a = sample_pattern(15, &[1, 2, 3, 4], 4, 99).unwrap();
        let b = sample_pattern(15, &[1, 2, 3, 4], 4, 99).unwrap();
        let c = sample_pattern(15, &[1, 2, 3, 4], 4, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_patch_forces_origin() {
        let p = sample_pattern(1, &[1], 1, 5).unwrap();
        assert_eq!(p.pairs[0].x, Offset { row: 0, col: 0 });
        assert_eq!(p.pairs[0].y, Offset { row: 0, col: 0 });
    }

    #[test]
    fn oversized_scale_is_rejected() {
        assert!(sample_pattern(15, &[1, 16], 4, 5).is_err());
        assert!(sample_pattern(14, &[1], 4, 5).is_err()); // even L
        assert!(sample_pattern(15, &[], 4, 5).is_err());
        assert!(sample_pattern(15, &[1], 0, 5).is_err());
    }

    #[test]
    fn even_scale_center_convention() {
        assert_eq!(block_span(0, 1), (0, 0));
        assert_eq!(block_span(0, 2), (0, 1)); // center names the upper-left middle
        assert_eq!(block_span(0, 3), (-1, 1));
        assert_eq!(block_span(0, 4), (-1, 2));
        assert_eq!(block_span(-2, 3), (-3, -1));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pattern.txt");
        let p = sample_pattern(15, &[1, 2, 3, 4], 4, 31).unwrap();
        save_pattern(&p, &path).unwrap();
        assert_eq!(load_pattern(&path).unwrap(), p);
    }

    #[test]
    fn hand_written_pattern_loads_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.txt");
        fs::write(&path, "9 2 1 123\n1 -2 3 0 0\n3 1 -1 -1 1\n").unwrap();
        let p = load_pattern(&path).unwrap();
        assert_eq!(p.patch_size, 9);
        assert_eq!(p.scales, vec![1, 3]);
        assert_eq!(p.pairs[0].x, Offset { row: -2, col: 3 });
        assert_eq!(p.pairs[1].y, Offset { row: -1, col: 1 });
    }

    #[test]
    fn malformed_files_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");

        // pair count disagrees with header
        fs::write(&path, "9 2 1 123\n1 0 0 0 0\n").unwrap();
        match load_pattern(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }

        // garbage on a pair line
        fs::write(&path, "9 1 1 123\n1 0 zero 0 0\n").unwrap();
        match load_pattern(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        // pair outside the patch
        fs::write(&path, "9 1 1 123\n3 4 0 0 0\n").unwrap();
        assert!(matches!(load_pattern(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn raw_coordinate_spread_tracks_patch_size() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let v = sample_offset(&mut rng, 15);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let std = (sum2 / n as f64 - mean * mean).sqrt();
        assert!((std - 3.0).abs() < 0.15, "std {std}");
    }
}
