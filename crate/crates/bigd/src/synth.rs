//! Synthetic labelled texture corpora for tests and demos: oriented
//! sinusoidal gratings plus a uniform-noise class, with per-image phase and
//! contrast jitter.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub images_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            images_per_class: 40,
            width: 64,
            height: 64,
            seed: 0,
        }
    }
}

// Not a multiple of common grid steps, so dense patches see many phases.
const GRATING_PERIOD: f64 = 10.0;

fn grating(spec: &CorpusSpec, angle_deg: f64, phase: f64, amplitude: f64) -> GrayImage {
    let theta = angle_deg.to_radians();
    let (dx, dy) = (theta.cos(), theta.sin());
    GrayImage::from_fn(spec.width, spec.height, |r, c| {
        let u = c as f64 * dx + r as f64 * dy;
        let v = 128.0 + amplitude * (2.0 * std::f64::consts::PI * u / GRATING_PERIOD + phase).sin();
        v.clamp(0.0, 255.0)
    })
}

/// Four separable classes: gratings at 0, 45, and 90 degrees, and uniform
/// noise. Per-image jitter stays small so the classes remain cleanly
/// separable. Deterministic in the spec seed.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<(String, Vec<GrayImage>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = Vec::new();
    for angle in [0.0, 45.0, 90.0] {
        let mut images = Vec::with_capacity(spec.images_per_class);
        for _ in 0..spec.images_per_class {
            let phase = rng.random::<f64>() * 0.5;
            let amplitude = 40.0 + rng.random::<f64>() * 20.0;
            images.push(grating(spec, angle, phase, amplitude));
        }
        corpus.push((format!("grating_{:03}", angle as u32), images));
    }
    let mut noise = Vec::with_capacity(spec.images_per_class);
    for _ in 0..spec.images_per_class {
        let mut img = Vec::with_capacity(spec.width * spec.height);
        for _ in 0..spec.width * spec.height {
            img.push((rng.random::<f64>() * 255.0).round());
        }
        noise.push(GrayImage::new(spec.width, spec.height, img).unwrap());
    }
    corpus.push(("noise".to_string(), noise));
    corpus
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::InvalidArgument(format!(
            "{} bytes do not fill a {width}x{height} PGM",
            data.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(data);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Materializes the corpus as a directory-per-class PGM tree.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> Result<()> {
    for (class, images) in generate_corpus(spec) {
        let class_dir = dir.join(&class);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        for (i, img) in images.iter().enumerate() {
            let bytes: Vec<u8> = img.data().iter().map(|&v| v.round() as u8).collect();
            write_pgm(
                &class_dir.join(format!("im_{i:03}.pgm")),
                img.width(),
                img.height(),
                &bytes,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_and_determinism() {
        let spec = CorpusSpec {
            images_per_class: 3,
            width: 16,
            height: 16,
            seed: 9,
        };
        let a = generate_corpus(&spec);
        let b = generate_corpus(&spec);
        assert_eq!(a.len(), 4);
        for ((name_a, imgs_a), (name_b, imgs_b)) in a.iter().zip(&b) {
            assert_eq!(name_a, name_b);
            assert_eq!(imgs_a, imgs_b);
        }
        assert!(a[0].0.starts_with("grating"));
        assert_eq!(a[3].0, "noise");
        for (_, imgs) in &a {
            assert_eq!(imgs.len(), 3);
            for img in imgs {
                assert!(img.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
            }
        }
    }

    #[test]
    fn written_corpus_scans_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            images_per_class: 2,
            width: 8,
            height: 8,
            seed: 1,
        };
        write_corpus(dir.path(), &spec).unwrap();
        let ds = crate::harness::scan_dataset(dir.path()).unwrap();
        assert_eq!(ds.classes.len(), 4);
        assert_eq!(ds.total_images(), 8);
        let img = crate::imageio::load_grayscale(&ds.image_path(0, 0).unwrap()).unwrap();
        assert_eq!((img.width(), img.height()), (8, 8));
    }
}
