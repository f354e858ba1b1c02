//! One-vs-rest linear SVM on encoded image vectors.
//!
//! Each class is trained against the rest by minimizing the regularized mean
//! hinge loss `lambda/2 ||w||^2 + mean(max(0, 1 - y (w.x + b)))` with dual
//! coordinate descent (one pass over the training points per epoch, in a
//! seeded shuffled order). The bias rides along as an implicit unit feature
//! and is regularized with the weights, which keeps the optimum unique; any
//! run that converges therefore yields the same decision function, including
//! under duplication of the training set.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{format_f64, FeatureMatrix};

#[derive(Debug, Clone)]
pub struct SvmConfig {
    pub lambda: f64,
    pub max_epochs: usize,
    /// Recorded for provenance; the optimizer itself is deterministic.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-4,
            max_epochs: 100,
            seed: 0,
        }
    }
}

/// Per-class hyperplanes.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub class_ids: Vec<usize>,
    /// One weight row per class, in `class_ids` order.
    pub weights: FeatureMatrix,
    pub biases: Vec<f64>,
    pub lambda: f64,
}

/// The conventional regularization weight: `1 / (#classes * #training images)`.
pub fn default_lambda(n_classes: usize, n_train: usize) -> f64 {
    1.0 / (n_classes * n_train) as f64
}

/// Epochs equivalent to a per-sample iteration budget.
pub fn epochs_for_iteration_budget(max_iterations: usize, n_train: usize) -> usize {
    max_iterations.div_ceil(n_train).max(1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual coordinate descent for the binary L1-loss SVM, bias augmented.
///
/// The primal `lambda/2 ||w||^2 + mean hinge` corresponds to the standard
/// per-sample box constraint `C = 1/(lambda n)`. Stops early once no dual
/// coordinate sees a meaningful projected-gradient violation.
fn train_binary(
    x: &FeatureMatrix,
    targets: &[f64],
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> (Vec<f64>, f64) {
    let n = x.rows();
    let d = x.dim();
    let c = 1.0 / (lambda * n as f64);
    let q_diag: Vec<f64> = (0..n).map(|i| dot(x.row(i), x.row(i)) + 1.0).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut max_violation = 0.0f64;
        for &i in &order {
            let xi = x.row(i);
            let grad = targets[i] * (dot(&w, xi) + b) - 1.0;
            // projected gradient honoring the box 0 <= alpha <= C
            let pg = if alpha[i] <= 0.0 {
                grad.min(0.0)
            } else if alpha[i] >= c {
                grad.max(0.0)
            } else {
                grad
            };
            max_violation = max_violation.max(pg.abs());
            if pg.abs() > 1e-12 {
                let next = (alpha[i] - grad / q_diag[i]).clamp(0.0, c);
                let delta = (next - alpha[i]) * targets[i];
                alpha[i] = next;
                for (wj, v) in w.iter_mut().zip(xi) {
                    *wj += delta * v;
                }
                b += delta;
            }
        }
        if max_violation < 1e-9 {
            break;
        }
    }
    (w, b)
}

/// Trains one-vs-rest hyperplanes; deterministic given `(x, y, config)`.
pub fn svm_train(x: &FeatureMatrix, y: &[usize], cfg: &SvmConfig) -> Result<SvmModel> {
    if x.rows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {}",
            cfg.lambda
        )));
    }
    if cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
    }
    let mut class_ids: Vec<usize> = y.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least two classes".into(),
        ));
    }

    let per_class: Vec<(Vec<f64>, f64)> = class_ids
        .par_iter()
        .map(|&c| {
            let targets: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(x, &targets, cfg.lambda, cfg.max_epochs, cfg.seed)
        })
        .collect();

    let mut weights = FeatureMatrix::new(x.dim());
    let mut biases = Vec::with_capacity(class_ids.len());
    for (w, b) in per_class {
        weights.push_row(&w)?;
        biases.push(b);
    }
    Ok(SvmModel {
        class_ids,
        weights,
        biases,
        lambda: cfg.lambda,
    })
}

/// Highest-scoring class; ties break toward the lowest class id.
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    if x.len() != model.weights.dim() {
        return Err(Error::InvalidArgument(format!(
            "input dim {} does not match model dim {}",
            x.len(),
            model.weights.dim()
        )));
    }
    let mut best = (model.class_ids[0], f64::NEG_INFINITY);
    for (i, &id) in model.class_ids.iter().enumerate() {
        let score = dot(model.weights.row(i), x) + model.biases[i];
        if score > best.1 {
            best = (id, score);
        }
    }
    Ok(best.0)
}

/// Top-1 accuracy in percent.
pub fn accuracy_percent(model: &SvmModel, x: &FeatureMatrix, y: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (i, &label) in y.iter().enumerate() {
        if svm_predict(model, x.row(i))? == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / y.len() as f64)
}

pub fn save_svm(model: &SvmModel, path: &Path) -> Result<()> {
    let mut out = format!("svm {} {}\n", model.class_ids.len(), model.weights.dim());
    out.push_str(
        &model
            .class_ids
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    );
    out.push('\n');
    for (i, row) in model.weights.iter_rows().enumerate() {
        for v in row {
            out.push_str(&format_f64(*v));
            out.push(' ');
        }
        out.push_str(&format_f64(model.biases[i]));
        out.push('\n');
    }
    out.push_str(&format_f64(model.lambda));
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 2 {
        return Err(Error::parse(path, 1, "truncated SVM model"));
    }
    let head: Vec<&str> = lines[0].split_whitespace().collect();
    if head.len() != 3 || head[0] != "svm" {
        return Err(Error::parse(path, 1, "expected header `svm C d`"));
    }
    let c: usize = head[1]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad class count"))?;
    let d: usize = head[2]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad dimension"))?;
    if lines.len() != c + 3 {
        return Err(Error::parse(
            path,
            1,
            format!("expected {} lines, found {}", c + 3, lines.len()),
        ));
    }
    let class_ids: std::result::Result<Vec<usize>, _> =
        lines[1].split_whitespace().map(str::parse).collect();
    let class_ids = class_ids.map_err(|_| Error::parse(path, 2, "bad class ids"))?;
    if class_ids.len() != c {
        return Err(Error::parse(path, 2, format!("expected {c} class ids")));
    }
    let mut weights = FeatureMatrix::new(d);
    let mut biases = Vec::with_capacity(c);
    for i in 0..c {
        let row: std::result::Result<Vec<f64>, _> =
            lines[2 + i].split_whitespace().map(str::parse::<f64>).collect();
        let mut row = row.map_err(|e| Error::parse(path, 3 + i, format!("bad float: {e}")))?;
        if row.len() != d + 1 {
            return Err(Error::parse(
                path,
                3 + i,
                format!("expected {} values, found {}", d + 1, row.len()),
            ));
        }
        biases.push(row.pop().unwrap());
        weights.push_row(&row)?;
    }
    let lambda: f64 = lines[c + 2]
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, c + 3, "bad lambda"))?;
    Ok(SvmModel {
        class_ids,
        weights,
        biases,
        lambda,
    })
}
