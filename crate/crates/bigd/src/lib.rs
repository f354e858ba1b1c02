//! Block intensity and gradient difference (BIGD) texture descriptors.
//!
//! The crate implements the full texture-classification pipeline around the
//! BIGD descriptor:
//!
//! 1. [`imageio`] — grayscale loading, resizing, and the dense patch grid.
//! 2. [`gradients`] — the five per-pixel channel maps (intensity, Sobel
//!    gradients, absolute gradients) and integral images for O(1) block means.
//! 3. [`sampling`] — the random multi-scale block-pair layout shared by every
//!    patch of a run.
//! 4. [`descriptor`] — dense per-patch BIGD descriptors built from block-pair
//!    feature differences.
//! 5. [`codebook`] — k-means codebooks and diagonal-covariance GMMs fit on a
//!    subsample of training descriptors.
//! 6. [`encoding`] — VLAD and improved-Fisher-vector image encodings.
//! 7. [`classifier`] — one-vs-rest linear SVM.
//! 8. [`harness`] — dataset scanning, split protocols, and repeated
//!    train/test evaluation with mean/std accuracy reports.
//!
//! [`synth`] generates small labelled texture corpora for tests and demos.

pub mod classifier;
pub mod codebook;
pub mod descriptor;
pub mod encoding;
pub mod error;
pub mod gradients;
pub mod harness;
pub mod imageio;
pub mod matrix;
pub mod sampling;
pub mod synth;

pub use classifier::SvmModel;
pub use codebook::{Codebook, GmmModel};
pub use descriptor::{BigdDescriptor, DescriptorSet};
pub use encoding::{EncodedImage, EncoderKind};
pub use error::{Error, Result};
pub use gradients::{Channel, ChannelMaps, IntegralStack};
pub use harness::{Dataset, Protocol, RunReport};
pub use imageio::{GrayImage, PatchGrid};
pub use matrix::FeatureMatrix;
pub use sampling::{BlockPair, SamplingPattern};
