//! Dense multi-scale BIGD descriptors.
//!
//! Each patch yields one descriptor: for every block pair of the sampling
//! pattern, the five-channel block means of the two blocks are subtracted,
//! and the 5-vectors are concatenated scale group by scale group (channel
//! innermost). A constant patch therefore maps to the zero vector, and
//! adding a constant to the image changes no descriptor.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gradients::{integrate, sobel, Channel, IntegralStack, CHANNELS};
use crate::imageio::{patch_grid, GrayImage};
use crate::matrix;
use crate::sampling::{block_span, Offset, SamplingPattern};

/// Per-block means of the five channels:
/// intensity, d_x, d_y, |d_x|, |d_y|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFeature(pub [f64; 5]);

/// One patch descriptor; length is `5 * pattern.total_pairs()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BigdDescriptor {
    pub values: Vec<f64>,
}

/// All descriptors of one image, one per patch-grid center, in row-major
/// grid order.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    dim: usize,
    values: Vec<f64>,
    /// Patch centers matching the descriptors; empty for sets loaded from a
    /// dump, which stores values only.
    pub centers: Vec<(usize, usize)>,
    /// Provenance tag, typically `class/filename`.
    pub image_id: String,
}

impl DescriptorSet {
    pub fn new(dim: usize, image_id: impl Into<String>) -> Self {
        DescriptorSet {
            dim,
            values: Vec::new(),
            centers: Vec::new(),
            image_id: image_id.into(),
        }
    }

    /// Wraps a row-major value buffer; centers stay empty.
    pub fn from_flat(dim: usize, values: Vec<f64>, image_id: impl Into<String>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "descriptor buffer of length {} is not a multiple of dim {dim}",
                values.len()
            )));
        }
        Ok(DescriptorSet {
            dim,
            values,
            centers: Vec::new(),
            image_id: image_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Writes the descriptor matrix in the binary f32 interchange format.
    /// Centers are not serialized.
    pub fn write(&self, path: &Path) -> Result<()> {
        matrix::write_f32_matrix(path, self.dim, &self.values)
    }

    /// Reads a dumped descriptor matrix; centers come back empty.
    pub fn read(path: &Path, image_id: impl Into<String>) -> Result<Self> {
        let m = matrix::read_f32_matrix(path)?;
        Ok(DescriptorSet {
            dim: m.dim(),
            values: m.as_slice().to_vec(),
            centers: Vec::new(),
            image_id: image_id.into(),
        })
    }
}

/// Absolute top-left corner of the block of size `scale` centered at
/// `patch_center + offset`.
fn block_top_left(
    patch_center: (usize, usize),
    offset: Offset,
    scale: usize,
) -> Result<(usize, usize)> {
    let (r0, _) = block_span(patch_center.0 as i32 + offset.row, scale);
    let (c0, _) = block_span(patch_center.1 as i32 + offset.col, scale);
    if r0 < 0 || c0 < 0 {
        return Err(Error::InvalidArgument(format!(
            "block of scale {scale} at offset ({}, {}) from ({}, {}) leaves the image",
            offset.row, offset.col, patch_center.0, patch_center.1
        )));
    }
    Ok((r0 as usize, c0 as usize))
}

/// Block mean of all five channels for the block of size `scale` centered at
/// `patch_center + offset`.
pub fn block_feature(
    stack: &IntegralStack,
    patch_center: (usize, usize),
    offset: Offset,
    scale: usize,
) -> Result<BlockFeature> {
    let top_left = block_top_left(patch_center, offset, scale)?;
    Ok(BlockFeature([
        stack.block_mean(Channel::Intensity, top_left, scale)?,
        stack.block_mean(Channel::GradX, top_left, scale)?,
        stack.block_mean(Channel::GradY, top_left, scale)?,
        stack.block_mean(Channel::AbsGradX, top_left, scale)?,
        stack.block_mean(Channel::AbsGradY, top_left, scale)?,
    ]))
}

/// Componentwise `a - b`; antisymmetric in its arguments.
pub fn pair_difference(a: &BlockFeature, b: &BlockFeature) -> [f64; 5] {
    std::array::from_fn(|i| a.0[i] - b.0[i])
}

/// Descriptor of the patch centered at `patch_center`: the concatenation,
/// over the pattern's pairs in scale-group order, of the five-channel
/// feature differences.
pub fn patch_descriptor(
    stack: &IntegralStack,
    pattern: &SamplingPattern,
    patch_center: (usize, usize),
) -> Result<BigdDescriptor> {
    let half = pattern.patch_size / 2;
    let (r, c) = patch_center;
    if r < half || c < half || r + half >= stack.height() || c + half >= stack.width() {
        return Err(Error::InvalidArgument(format!(
            "patch of size {} at ({r}, {c}) leaves the {}x{} image",
            pattern.patch_size,
            stack.height(),
            stack.width()
        )));
    }
    let mut values = Vec::with_capacity(pattern.descriptor_len());
    for pair in &pattern.pairs {
        // difference the raw block sums before dividing: for integer-valued
        // images a constant intensity offset then cancels exactly
        let x_tl = block_top_left(patch_center, pair.x, pair.scale)?;
        let y_tl = block_top_left(patch_center, pair.y, pair.scale)?;
        let area = (pair.scale * pair.scale) as f64;
        for ch in CHANNELS {
            let sx = stack.rect_sum(ch, x_tl, pair.scale, pair.scale)?;
            let sy = stack.rect_sum(ch, y_tl, pair.scale, pair.scale)?;
            values.push((sx - sy) / area);
        }
    }
    Ok(BigdDescriptor { values })
}

/// Extracts one descriptor per patch-grid center, in row-major grid order.
pub fn extract_dense(
    img: &GrayImage,
    pattern: &SamplingPattern,
    step: usize,
    image_id: impl Into<String>,
) -> Result<DescriptorSet> {
    let grid = patch_grid(img, pattern.patch_size, step)?;
    let stack = integrate(&sobel(img));
    let mut set = DescriptorSet::new(pattern.descriptor_len(), image_id);
    set.values.reserve(grid.centers.len() * set.dim);
    for &center in &grid.centers {
        let d = patch_descriptor(&stack, pattern, center)?;
        set.values.extend_from_slice(&d.values);
        set.centers.push(center);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_pattern, BlockPair};

    fn ramp_image(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |r, c| (3 * r + 2 * c) as f64)
    }

    fn noisy_image(w: usize, h: usize, seed: u64) -> GrayImage {
        GrayImage::from_fn(w, h, |r, c| {
            let x = (r as u64)
                .wrapping_mul(0x9E3779B97F4A7C15)
                .wrapping_add(c as u64)
                .wrapping_mul(0xBF58476D1CE4E5B9)
                .wrapping_add(seed);
            ((x >> 35) % 256) as f64
        })
    }

    /// From-scratch block mean straight off the channel maps.
    fn naive_block_mean(
        maps: &crate::gradients::ChannelMaps,
        ch: Channel,
        center: (i32, i32),
        scale: usize,
    ) -> f64 {
        let (r0, r1) = block_span(center.0, scale);
        let (c0, c1) = block_span(center.1, scale);
        let mut sum = 0.0;
        for r in r0..=r1 {
            for c in c0..=c1 {
                sum += maps.at(ch, r as usize, c as usize);
            }
        }
        sum / (scale * scale) as f64
    }

    #[test]
    fn constant_image_block_feature() {
        let img = GrayImage::from_fn(9, 9, |_, _| 33.0);
        let stack = integrate(&sobel(&img));
        let f = block_feature(&stack, (4, 4), Offset { row: 1, col: -2 }, 3).unwrap();
        assert_eq!(f.0, [33.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_block_is_the_pixel() {
        let img = noisy_image(9, 9, 5);
        let maps = sobel(&img);
        let stack = integrate(&maps);
        let f = block_feature(&stack, (4, 4), Offset { row: -1, col: 2 }, 1).unwrap();
        assert_eq!(
            f.0,
            [
                maps.at(Channel::Intensity, 3, 6),
                maps.at(Channel::GradX, 3, 6),
                maps.at(Channel::GradY, 3, 6),
                maps.at(Channel::AbsGradX, 3, 6),
                maps.at(Channel::AbsGradY, 3, 6),
            ]
        );
    }

    #[test]
    fn block_feature_matches_brute_force_on_ramp() {
        let img = ramp_image(7, 7);
        let maps = sobel(&img);
        let stack = integrate(&maps);
        let f = block_feature(&stack, (3, 3), Offset { row: 0, col: 1 }, 3).unwrap();
        for (i, ch) in crate::gradients::CHANNELS.iter().enumerate() {
            let want = naive_block_mean(&maps, *ch, (3, 4), 3);
            assert!((f.0[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_difference_is_antisymmetric() {
        let a = BlockFeature([1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = BlockFeature([0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(pair_difference(&a, &b), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(pair_difference(&a, &a), [0.0; 5]);
        let ab = pair_difference(&a, &b);
        let ba = pair_difference(&b, &a);
        for i in 0..5 {
            assert_eq!(ab[i], -ba[i]);
        }
    }

    #[test]
    fn constant_patch_gives_zero_descriptor() {
        let img = GrayImage::from_fn(21, 21, |_, _| 100.0);
        let stack = integrate(&sobel(&img));
        let pattern = sample_pattern(15, &[1, 2, 3, 4], 4, 3).unwrap();
        let d = patch_descriptor(&stack, &pattern, (10, 10)).unwrap();
        assert_eq!(d.values.len(), 80);
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pair_descriptor_has_length_five() {
        let img = noisy_image(11, 11, 2);
        let stack = integrate(&sobel(&img));
        let pattern = sample_pattern(7, &[3], 1, 8).unwrap();
        let d = patch_descriptor(&stack, &pattern, (5, 5)).unwrap();
        assert_eq!(d.values.len(), 5);
    }

    #[test]
    fn descriptor_matches_naive_reimplementation() {
        // fixed image, hand-fixed two-pair pattern
        let img = noisy_image(19, 19, 77);
        let maps = sobel(&img);
        let stack = integrate(&maps);
        let pattern = SamplingPattern {
            patch_size: 15,
            scales: vec![2, 4],
            pairs_per_scale: 1,
            seed: 0,
            pairs: vec![
                BlockPair {
                    x: Offset { row: -3, col: 2 },
                    y: Offset { row: 4, col: -1 },
                    scale: 2,
                },
                BlockPair {
                    x: Offset { row: 0, col: -5 },
                    y: Offset { row: 2, col: 3 },
                    scale: 4,
                },
            ],
        };
        let center = (9, 9);
        let d = patch_descriptor(&stack, &pattern, center).unwrap();

        let mut want = Vec::new();
        for pair in &pattern.pairs {
            for ch in crate::gradients::CHANNELS {
                let fx = naive_block_mean(
                    &maps,
                    ch,
                    (center.0 as i32 + pair.x.row, center.1 as i32 + pair.x.col),
                    pair.scale,
                );
                let fy = naive_block_mean(
                    &maps,
                    ch,
                    (center.0 as i32 + pair.y.row, center.1 as i32 + pair.y.col),
                    pair.scale,
                );
                want.push(fx - fy);
            }
        }
        assert_eq!(d.values.len(), want.len());
        for (got, want) in d.values.iter().zip(&want) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_extraction_counts_and_order() {
        let img = noisy_image(31, 25, 4);
        let pattern = sample_pattern(15, &[1, 2, 3, 4], 4, 3).unwrap();
        let set = extract_dense(&img, &pattern, 2, "img").unwrap();
        let grid = patch_grid(&img, 15, 2).unwrap();
        assert_eq!(set.len(), grid.centers.len());
        assert_eq!(set.centers, grid.centers);
        assert_eq!(set.dim(), 80);

        // exactly one patch when the image is L x L
        let tiny = noisy_image(15, 15, 4);
        let one = extract_dense(&tiny, &pattern, 2, "tiny").unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn intensity_offset_leaves_descriptors_unchanged() {
        let img = noisy_image(25, 25, 9);
        let shifted = GrayImage::from_fn(25, 25, |r, c| img.at(r, c) + 37.0);
        let pattern = sample_pattern(15, &[1, 2, 3, 4], 4, 3).unwrap();
        let a = extract_dense(&img, &pattern, 2, "a").unwrap();
        let b = extract_dense(&shifted, &pattern, 2, "b").unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn contrast_scaling_scales_descriptors() {
        let img = noisy_image(25, 25, 13);
        let doubled = GrayImage::from_fn(25, 25, |r, c| 2.0 * img.at(r, c));
        let pattern = sample_pattern(15, &[1, 2, 3, 4], 4, 3).unwrap();
        let a = extract_dense(&img, &pattern, 2, "a").unwrap();
        let b = extract_dense(&doubled, &pattern, 2, "b").unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(*y, 2.0 * *x);
        }
    }

    #[test]
    fn oversized_pattern_is_rejected() {
        let img = noisy_image(11, 11, 1);
        let pattern = sample_pattern(15, &[1], 1, 3).unwrap();
        assert!(extract_dense(&img, &pattern, 2, "x").is_err());

        let stack = integrate(&sobel(&img));
        assert!(patch_descriptor(&stack, &pattern, (5, 5)).is_err());
    }

    #[test]
    fn dump_round_trip_within_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.bgd");
        let img = noisy_image(25, 25, 21);
        let pattern = sample_pattern(15, &[1, 2], 2, 3).unwrap();
        let set = extract_dense(&img, &pattern, 4, "img-21").unwrap();
        set.write(&path).unwrap();
        let loaded = DescriptorSet::read(&path, "img-21").unwrap();
        assert_eq!(loaded.len(), set.len());
        assert_eq!(loaded.dim(), set.dim());
        for (a, b) in loaded.values.iter().zip(&set.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
