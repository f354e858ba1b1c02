//! Aggregating an image's descriptors into one fixed-length vector.
//!
//! VLAD accumulates `center - descriptor` residuals per nearest codeword
//! (length `d*K`); the Fisher vector accumulates per-component mean and
//! variance derivatives of the GMM log-likelihood (length `2*d*K`). Both
//! finish with a signed square root and global L2 normalization.

use std::fs;
use std::path::Path;

use crate::codebook::{posterior, Codebook, GmmModel};
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Vlad,
    Ifv,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Vlad => "vlad",
            EncoderKind::Ifv => "ifv",
        })
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vlad" => Ok(EncoderKind::Vlad),
            "ifv" => Ok(EncoderKind::Ifv),
            other => Err(Error::InvalidArgument(format!(
                "unknown encoder `{other}` (expected vlad or ifv)"
            ))),
        }
    }
}

/// One encoded image: a unit-norm vector (or the zero vector for degenerate
/// input) plus an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub values: Vec<f64>,
    pub method: EncoderKind,
    pub label: Option<usize>,
}

/// In-place `sign(v) * sqrt(|v|)`.
pub fn signed_sqrt(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
}

/// In-place division by the L2 norm; the zero vector is left unchanged.
pub fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

fn check_input(dim: usize, set: &DescriptorSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "descriptor set {} is empty",
            set.image_id
        )));
    }
    if set.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "descriptor dim {} does not match model dim {dim}",
            set.dim()
        )));
    }
    Ok(())
}

/// VLAD encoding: per nearest codeword, the accumulated `u_k - x` residuals,
/// concatenated in center order, then signed sqrt and L2 normalization.
/// Nearest-center ties break toward the lowest index.
pub fn vlad_encode(cb: &Codebook, set: &DescriptorSet) -> Result<EncodedImage> {
    check_input(cb.dim(), set)?;
    let d = cb.dim();
    let mut values = vec![0.0; cb.k() * d];
    for x in set.iter() {
        let (j, _) = cb.nearest(x);
        let center = cb.centers.row(j);
        let block = &mut values[j * d..(j + 1) * d];
        for t in 0..d {
            block[t] += center[t] - x[t];
        }
    }
    signed_sqrt(&mut values);
    l2_normalize(&mut values);
    Ok(EncodedImage {
        values,
        method: EncoderKind::Vlad,
        label: None,
    })
}

/// Raw sums over the set's descriptors of the log-likelihood derivatives:
/// per component `k`, `h_k * (x - mu_k) / var_k` for the means and
/// `h_k / 2 * (var_k - (x - mu_k)^2)` for the inverse variances. Both
/// returned buffers are `K * d`, component-major.
pub fn fv_gradients(model: &GmmModel, set: &DescriptorSet) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(model.dim(), set)?;
    let d = model.dim();
    let k = model.k();
    let mut mean_grad = vec![0.0; k * d];
    let mut var_grad = vec![0.0; k * d];
    for x in set.iter() {
        let h = posterior(model, x);
        for c in 0..k {
            if h[c] == 0.0 {
                continue;
            }
            let mu = model.means.row(c);
            let var = model.variances.row(c);
            let mg = &mut mean_grad[c * d..(c + 1) * d];
            for t in 0..d {
                let diff = x[t] - mu[t];
                mg[t] += h[c] * diff / var[t];
            }
            let vg = &mut var_grad[c * d..(c + 1) * d];
            for t in 0..d {
                let diff = x[t] - mu[t];
                vg[t] += 0.5 * h[c] * (var[t] - diff * diff);
            }
        }
    }
    Ok((mean_grad, var_grad))
}

/// How the Fisher-vector blocks are scaled before the sqrt/L2 steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FvScaling {
    /// Fisher-information normalization of the improved Fisher vector:
    /// per component, `h/sqrt(pi) (x-mu)/sigma` mean terms and
    /// `h/sqrt(2 pi) (((x-mu)/sigma)^2 - 1)` variance terms. Descriptor
    /// dimensions contribute comparably regardless of their raw scale.
    #[default]
    Improved,
    /// The plain log-likelihood derivatives of [`fv_gradients`], unscaled.
    /// High-variance descriptor dimensions dominate this embedding.
    RawGradients,
}

impl std::fmt::Display for FvScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FvScaling::Improved => "improved",
            FvScaling::RawGradients => "raw",
        })
    }
}

impl std::str::FromStr for FvScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "improved" => Ok(FvScaling::Improved),
            "raw" => Ok(FvScaling::RawGradients),
            other => Err(Error::InvalidArgument(format!(
                "unknown fv scaling `{other}` (expected improved or raw)"
            ))),
        }
    }
}

/// Fisher-vector encoding: accumulated mean then variance blocks, averaged
/// over the descriptor count, then signed sqrt and L2 normalization.
pub fn fv_encode(
    model: &GmmModel,
    set: &DescriptorSet,
    scaling: FvScaling,
) -> Result<EncodedImage> {
    check_input(model.dim(), set)?;
    let d = model.dim();
    let k = model.k();
    let mut values = match scaling {
        FvScaling::RawGradients => {
            let (mut mean_grad, var_grad) = fv_gradients(model, set)?;
            mean_grad.extend_from_slice(&var_grad);
            mean_grad
        }
        FvScaling::Improved => {
            let mut out = vec![0.0; 2 * k * d];
            let (means, vars) = out.split_at_mut(k * d);
            for x in set.iter() {
                let h = posterior(model, x);
                for c in 0..k {
                    if h[c] == 0.0 {
                        continue;
                    }
                    let mu = model.means.row(c);
                    let var = model.variances.row(c);
                    let wm = h[c] / model.priors[c].sqrt();
                    let wv = h[c] / (2.0 * model.priors[c]).sqrt();
                    for t in 0..d {
                        let z = (x[t] - mu[t]) / var[t].sqrt();
                        means[c * d + t] += wm * z;
                        vars[c * d + t] += wv * (z * z - 1.0);
                    }
                }
            }
            out
        }
    };
    let m = set.len() as f64;
    for v in values.iter_mut() {
        *v /= m;
    }
    signed_sqrt(&mut values);
    l2_normalize(&mut values);
    Ok(EncodedImage {
        values,
        method: EncoderKind::Ifv,
        label: None,
    })
}

/// Sidecar label file: one integer class id per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad label `{line}`")))
        })
        .collect()
}
