//! Shared input generators for the pipeline benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bigd::codebook::{gmm_fit, kmeans_fit, GmmConfig, KmeansConfig};
use bigd::descriptor::{extract_dense, DescriptorSet};
use bigd::imageio::GrayImage;
use bigd::sampling::{sample_pattern, SamplingPattern};
use bigd::{Codebook, GmmModel};

pub fn random_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height)
        .map(|_| (rng.random::<f64>() * 255.0).round())
        .collect();
    GrayImage::new(width, height, data).unwrap()
}

pub fn reference_pattern() -> SamplingPattern {
    sample_pattern(15, &[1, 2, 3, 4], 4, 9).unwrap()
}

/// Dense descriptors of one reference-sized image.
pub fn reference_descriptors() -> DescriptorSet {
    extract_dense(&random_image(200, 200, 1), &reference_pattern(), 2, "bench").unwrap()
}

pub fn fitted_codebook(set: &DescriptorSet, k: usize) -> Codebook {
    let sample = bigd::codebook::subsample_descriptors(&[set], 20_000, 5).unwrap();
    kmeans_fit(
        &sample,
        &KmeansConfig {
            k,
            max_iters: 20,
            tol: 1e-4,
            seed: 5,
        },
    )
    .unwrap()
}

pub fn fitted_gmm(set: &DescriptorSet, k: usize) -> GmmModel {
    let sample = bigd::codebook::subsample_descriptors(&[set], 20_000, 5).unwrap();
    gmm_fit(
        &sample,
        &GmmConfig {
            k,
            max_iters: 20,
            tol: 1e-4,
            variance_floor_scale: 1e-4,
            seed: 5,
        },
    )
    .unwrap()
}
