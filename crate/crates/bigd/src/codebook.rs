//! Visual vocabularies: k-means codebooks (for VLAD) and diagonal-covariance
//! Gaussian mixtures fit by EM (for Fisher vectors).
//!
//! Both fits are deterministic given `(data, config, seed)`. Parallel work is
//! chunked at a fixed size and reduced in chunk order, so results do not
//! depend on the thread count.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::matrix::{format_f64, FeatureMatrix};

/// Rows per parallel work unit; fixed so reductions are order-stable.
const PAR_CHUNK: usize = 4096;

/// Tolerance slack for the monotonicity guarantees, scaled by magnitude.
fn mono_slack(reference: f64) -> f64 {
    1e-9 * reference.abs().max(1.0)
}

/// K-means cluster centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centers: FeatureMatrix,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    /// Index and squared distance of the nearest center; ties go to the
    /// lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centers.iter_rows().enumerate() {
            let d = dist2(c, x);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    /// Mixing weights; positive, summing to 1.
    pub priors: Vec<f64>,
    /// K x d component means.
    pub means: FeatureMatrix,
    /// K x d per-dimension variances, floored during fitting.
    pub variances: FeatureMatrix,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    /// `log(pi_k) + log N(x | mu_k, Sigma_k)` for every component.
    pub fn log_weighted_densities(&self, x: &[f64], out: &mut [f64]) {
        const LOG_2PI: f64 = 1.837877066409345;
        for k in 0..self.k() {
            let mu = self.means.row(k);
            let var = self.variances.row(k);
            let mut quad = 0.0;
            let mut log_det = 0.0;
            for j in 0..x.len() {
                let d = x[j] - mu[j];
                quad += d * d / var[j];
                log_det += var[j].ln();
            }
            out[k] = self.priors[k].ln()
                - 0.5 * (x.len() as f64 * LOG_2PI + log_det + quad);
        }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop when no center moves farther than this between iterations.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 128,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub tol: f64,
    /// Variance floor as a fraction of the mean per-dimension data variance.
    pub variance_floor_scale: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            k: 128,
            max_iters: 100,
            tol: 1e-6,
            variance_floor_scale: 1e-4,
            seed: 0,
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Uniform subsample without replacement of at most `max_n` descriptors from
/// the given sets, deterministic in `seed`.
pub fn subsample_descriptors(
    sets: &[&DescriptorSet],
    max_n: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    let total: usize = sets.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "no descriptors available to subsample".into(),
        ));
    }
    let dim = sets[0].dim();
    if sets.iter().any(|s| s.dim() != dim) {
        return Err(Error::InvalidArgument(
            "descriptor sets have mismatched dimensions".into(),
        ));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("subsample size must be > 0".into()));
    }
    // prefix sums for global-index lookup
    let mut starts = Vec::with_capacity(sets.len());
    let mut acc = 0;
    for s in sets {
        starts.push(acc);
        acc += s.len();
    }
    let take = max_n.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, total, take);
    let mut m = FeatureMatrix::new(dim);
    for global in picked.iter() {
        let set_idx = starts.partition_point(|&s| s <= global) - 1;
        let row = global - starts[set_idx];
        m.push_row(sets[set_idx].descriptor(row))?;
    }
    Ok(m)
}

/// Streaming variant of [`subsample_descriptors`] over dumped descriptor
/// matrices. Selected rows come back in global index order; each file is
/// read at most once and only when it contributes rows.
pub fn subsample_descriptor_files(
    paths: &[std::path::PathBuf],
    max_n: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    if max_n == 0 {
        return Err(Error::InvalidArgument("subsample size must be > 0".into()));
    }
    let mut counts = Vec::with_capacity(paths.len());
    let mut dim = 0usize;
    for p in paths {
        let (rows, d) = crate::matrix::read_f32_header(p)?;
        if dim == 0 {
            dim = d;
        } else if d != dim {
            return Err(Error::InvalidArgument(format!(
                "{}: descriptor dim {d} does not match {dim}",
                p.display()
            )));
        }
        counts.push(rows);
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(
            "no descriptors available to subsample".into(),
        ));
    }
    let take = max_n.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, take).into_vec();
    picked.sort_unstable();

    let mut out = FeatureMatrix::new(dim);
    let mut next = 0usize; // cursor into picked
    let mut start = 0usize; // global index of the current file's first row
    for (p, &rows) in paths.iter().zip(&counts) {
        let end = start + rows;
        if next < picked.len() && picked[next] < end {
            let m = crate::matrix::read_f32_matrix(p)?;
            while next < picked.len() && picked[next] < end {
                out.push_row(m.row(picked[next] - start))?;
                next += 1;
            }
        }
        start = end;
    }
    Ok(out)
}

/// K-means++ seeding.
fn init_centers(data: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let n = data.rows();
    let mut centers = FeatureMatrix::new(data.dim());
    let first = rng.random_range(0..n);
    centers.push_row(data.row(first)).unwrap();
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(data.row(i), data.row(first))).collect();
    while centers.rows() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            // all remaining mass on duplicates of chosen centers
            rng.random_range(0..n)
        };
        centers.push_row(data.row(next)).unwrap();
        let c = centers.row(centers.rows() - 1).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(data.row(i), &c));
        }
    }
    centers
}

/// Nearest-center assignment for every row, chunked in parallel.
fn assign_all(data: &FeatureMatrix, centers: &FeatureMatrix) -> (Vec<usize>, Vec<f64>) {
    let n = data.rows();
    let results: Vec<(usize, f64)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(PAR_CHUNK)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&i| {
                let x = data.row(i);
                let mut best = (0usize, f64::INFINITY);
                for (j, c) in centers.iter_rows().enumerate() {
                    let d = dist2(c, x);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
        })
        .collect();
    results.into_iter().unzip()
}

/// Lloyd's algorithm from k-means++ seeds.
///
/// The within-cluster sum of squares is checked every iteration and must not
/// increase; empty clusters are reseeded at the point farthest from its
/// current center.
pub fn kmeans_fit(data: &FeatureMatrix, cfg: &KmeansConfig) -> Result<Codebook> {
    kmeans_fit_traced(data, cfg).map(|(cb, _)| cb)
}

/// Like [`kmeans_fit`] but also returns the per-iteration WCSS trace.
pub fn kmeans_fit_traced(
    data: &FeatureMatrix,
    cfg: &KmeansConfig,
) -> Result<(Codebook, Vec<f64>)> {
    let n = data.rows();
    let d = data.dim();
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs at least k={} rows, got {}",
            cfg.k, n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers = init_centers(data, cfg.k, &mut rng);
    let mut trace = Vec::new();
    let mut prev_wcss = f64::INFINITY;

    for _ in 0..cfg.max_iters.max(1) {
        let (assign, dists) = assign_all(data, &centers);
        let wcss: f64 = dists.iter().sum();
        if wcss > prev_wcss + mono_slack(prev_wcss) {
            return Err(Error::Numeric(format!(
                "k-means WCSS increased: {prev_wcss} -> {wcss}"
            )));
        }
        trace.push(wcss);
        prev_wcss = wcss;

        // centroid update
        let mut sums = vec![0.0; cfg.k * d];
        let mut counts = vec![0usize; cfg.k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            let row = data.row(i);
            let s = &mut sums[a * d..(a + 1) * d];
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut new_centers = FeatureMatrix::new(d);
        let mut taken = std::collections::HashSet::new();
        for j in 0..cfg.k {
            if counts[j] == 0 {
                // reseed at the farthest point not already used for repair
                let far = dists
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                taken.insert(far);
                new_centers.push_row(data.row(far))?;
            } else {
                let row: Vec<f64> = sums[j * d..(j + 1) * d]
                    .iter()
                    .map(|s| s / counts[j] as f64)
                    .collect();
                new_centers.push_row(&row)?;
            }
        }
        let movement = (0..cfg.k)
            .map(|j| dist2(centers.row(j), new_centers.row(j)).sqrt())
            .fold(0.0, f64::max);
        centers = new_centers;
        if movement < cfg.tol {
            break;
        }
    }
    Ok((Codebook { centers }, trace))
}

/// Per-chunk E-step accumulator.
struct EStepPartial {
    ll: f64,
    nk: Vec<f64>,
    sum_x: Vec<f64>,
    sum_x2: Vec<f64>,
}

/// Fits a diagonal-covariance GMM by EM, initialized from k-means.
///
/// The log-likelihood is checked every iteration and must not decrease
/// (within a small slack); violations surface as numeric errors.
pub fn gmm_fit(data: &FeatureMatrix, cfg: &GmmConfig) -> Result<GmmModel> {
    gmm_fit_traced(data, cfg).map(|(m, _)| m)
}

/// Like [`gmm_fit`] but also returns the per-iteration log-likelihood trace.
pub fn gmm_fit_traced(data: &FeatureMatrix, cfg: &GmmConfig) -> Result<(GmmModel, Vec<f64>)> {
    let n = data.rows();
    let d = data.dim();
    let k = cfg.k;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "GMM needs at least k={k} rows, got {n}"
        )));
    }

    // variance floor from the overall data variance
    let mut dim_mean = vec![0.0; d];
    for row in data.iter_rows() {
        for (m, v) in dim_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in dim_mean.iter_mut() {
        *m /= n as f64;
    }
    let mut dim_var = vec![0.0; d];
    for row in data.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            let diff = v - dim_mean[j];
            dim_var[j] += diff * diff;
        }
    }
    for v in dim_var.iter_mut() {
        *v /= n as f64;
    }
    let mean_var = dim_var.iter().sum::<f64>() / d as f64;
    let floor = (cfg.variance_floor_scale * mean_var).max(1e-12);

    // k-means initialization
    let km = kmeans_fit(
        data,
        &KmeansConfig {
            k,
            max_iters: cfg.max_iters,
            tol: 1e-6,
            seed: cfg.seed,
        },
    )?;
    let (assign, _) = assign_all(data, &km.centers);
    let mut counts = vec![0usize; k];
    let mut sum_x = vec![0.0; k * d];
    let mut sum_x2 = vec![0.0; k * d];
    for (i, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        for (j, &v) in data.row(i).iter().enumerate() {
            sum_x[a * d + j] += v;
            sum_x2[a * d + j] += v * v;
        }
    }
    let mut priors = vec![0.0; k];
    let mut means = FeatureMatrix::new(d);
    let mut variances = FeatureMatrix::new(d);
    for j in 0..k {
        let c = counts[j];
        priors[j] = c as f64 / n as f64;
        if c == 0 {
            means.push_row(km.centers.row(j))?;
            variances.push_row(&dim_var.iter().map(|v| v.max(floor)).collect::<Vec<_>>())?;
        } else {
            let mu: Vec<f64> = (0..d).map(|t| sum_x[j * d + t] / c as f64).collect();
            let var: Vec<f64> = (0..d)
                .map(|t| (sum_x2[j * d + t] / c as f64 - mu[t] * mu[t]).max(floor))
                .collect();
            means.push_row(&mu)?;
            variances.push_row(&var)?;
        }
    }
    floor_priors(&mut priors);

    let mut model = GmmModel {
        priors,
        means,
        variances,
    };
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..cfg.max_iters.max(1) {
        // E-step, chunked for order-stable parallel reduction
        let partials: Vec<EStepPartial> = (0..n)
            .collect::<Vec<_>>()
            .par_chunks(PAR_CHUNK)
            .map(|chunk| {
                let mut p = EStepPartial {
                    ll: 0.0,
                    nk: vec![0.0; k],
                    sum_x: vec![0.0; k * d],
                    sum_x2: vec![0.0; k * d],
                };
                let mut logs = vec![0.0; k];
                for &i in chunk {
                    let x = data.row(i);
                    model.log_weighted_densities(x, &mut logs);
                    let lse = log_sum_exp(&logs);
                    p.ll += lse;
                    for c in 0..k {
                        let r = (logs[c] - lse).exp();
                        p.nk[c] += r;
                        for (j, &v) in x.iter().enumerate() {
                            p.sum_x[c * d + j] += r * v;
                            p.sum_x2[c * d + j] += r * v * v;
                        }
                    }
                }
                p
            })
            .collect();

        let mut ll = 0.0;
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k * d];
        let mut sx2 = vec![0.0; k * d];
        for p in &partials {
            ll += p.ll;
            for c in 0..k {
                nk[c] += p.nk[c];
            }
            for t in 0..k * d {
                sx[t] += p.sum_x[t];
                sx2[t] += p.sum_x2[t];
            }
        }

        if ll + mono_slack(prev_ll) < prev_ll {
            return Err(Error::Numeric(format!(
                "EM log-likelihood decreased: {prev_ll} -> {ll}"
            )));
        }
        trace.push(ll);
        let improved = ll - prev_ll;
        let converged = prev_ll.is_finite() && improved < cfg.tol * prev_ll.abs().max(1.0);
        prev_ll = ll;
        if converged {
            break;
        }

        // M-step
        let mut priors = vec![0.0; k];
        let mut means = FeatureMatrix::new(d);
        let mut variances = FeatureMatrix::new(d);
        for c in 0..k {
            priors[c] = nk[c] / n as f64;
            if nk[c] < 1e-10 {
                // dead component: keep its parameters, prior hits the floor
                means.push_row(model.means.row(c))?;
                variances.push_row(model.variances.row(c))?;
                continue;
            }
            let mu: Vec<f64> = (0..d).map(|t| sx[c * d + t] / nk[c]).collect();
            let var: Vec<f64> = (0..d)
                .map(|t| (sx2[c * d + t] / nk[c] - mu[t] * mu[t]).max(floor))
                .collect();
            means.push_row(&mu)?;
            variances.push_row(&var)?;
        }
        floor_priors(&mut priors);
        model = GmmModel {
            priors,
            means,
            variances,
        };
    }
    Ok((model, trace))
}

fn floor_priors(priors: &mut [f64]) {
    for p in priors.iter_mut() {
        *p = p.max(1e-10);
    }
    let total: f64 = priors.iter().sum();
    for p in priors.iter_mut() {
        *p /= total;
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior component responsibilities `h` for a single descriptor,
/// computed in log space; `h` is non-negative and sums to 1.
pub fn posterior(model: &GmmModel, x: &[f64]) -> Vec<f64> {
    let mut logs = vec![0.0; model.k()];
    model.log_weighted_densities(x, &mut logs);
    let lse = log_sum_exp(&logs);
    let mut h: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
    let total: f64 = h.iter().sum();
    for v in h.iter_mut() {
        *v /= total;
    }
    h
}

// ---------------------------------------------------------------------------
// Plain-text model files: header `kind K d`, then rows of floats printed with
// 17 significant digits so doubles round-trip exactly.
// ---------------------------------------------------------------------------

fn push_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        out.push_str(&format_f64(*v));
        first = false;
    }
    out.push('\n');
}

fn parse_row(path: &Path, line_no: usize, line: &str, dim: usize) -> Result<Vec<f64>> {
    let row: std::result::Result<Vec<f64>, _> =
        line.split_whitespace().map(str::parse::<f64>).collect();
    let row = row.map_err(|e| Error::parse(path, line_no, format!("bad float: {e}")))?;
    if row.len() != dim {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected {dim} values, found {}", row.len()),
        ));
    }
    Ok(row)
}

fn read_model_lines(path: &Path, kind: &str) -> Result<(usize, usize, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty model file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != kind {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{kind} K d`, found `{header}`"),
        ));
    }
    let k: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad K"))?;
    let d: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad d"))?;
    Ok((k, d, lines.map(String::from).collect()))
}

pub fn save_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    let mut out = format!("kmeans {} {}\n", cb.k(), cb.dim());
    for row in cb.centers.iter_rows() {
        push_row(&mut out, row);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let (k, d, lines) = read_model_lines(path, "kmeans")?;
    if lines.len() != k {
        return Err(Error::parse(
            path,
            1,
            format!("expected {k} center rows, found {}", lines.len()),
        ));
    }
    let mut centers = FeatureMatrix::new(d);
    for (i, line) in lines.iter().enumerate() {
        centers.push_row(&parse_row(path, i + 2, line, d)?)?;
    }
    Ok(Codebook { centers })
}

pub fn save_gmm(model: &GmmModel, path: &Path) -> Result<()> {
    let mut out = format!("gmm {} {}\n", model.k(), model.dim());
    push_row(&mut out, &model.priors);
    for row in model.means.iter_rows() {
        push_row(&mut out, row);
    }
    for row in model.variances.iter_rows() {
        push_row(&mut out, row);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_gmm(path: &Path) -> Result<GmmModel> {
    let (k, d, lines) = read_model_lines(path, "gmm")?;
    if lines.len() != 2 * k + 1 {
        return Err(Error::parse(
            path,
            1,
            format!("expected priors plus {k} mean and {k} variance rows"),
        ));
    }
    let priors = parse_row(path, 2, &lines[0], k)?;
    let mut means = FeatureMatrix::new(d);
    let mut variances = FeatureMatrix::new(d);
    for i in 0..k {
        means.push_row(&parse_row(path, 3 + i, &lines[1 + i], d)?)?;
    }
    for i in 0..k {
        variances.push_row(&parse_row(path, 3 + k + i, &lines[1 + k + i], d)?)?;
    }
    Ok(GmmModel {
        priors,
        means,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_from(rows: &[&[f64]]) -> FeatureMatrix {
        let mut m = FeatureMatrix::new(rows[0].len());
        for r in rows {
            m.push_row(r).unwrap();
        }
        m
    }

    fn gaussian_blob(
        rng: &mut ChaCha8Rng,
        center: &[f64],
        std: f64,
        n: usize,
        out: &mut FeatureMatrix,
    ) {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, std).unwrap();
        for _ in 0..n {
            let row: Vec<f64> = center.iter().map(|c| c + normal.sample(rng)).collect();
            out.push_row(&row).unwrap();
        }
    }

    #[test]
    fn subsample_keeps_everything_when_small() {
        let img = crate::imageio::GrayImage::from_fn(19, 19, |r, c| ((r * 7 + c * 13) % 251) as f64);
        let pattern = crate::sampling::sample_pattern(15, &[1, 2], 2, 3).unwrap();
        let set = crate::descriptor::extract_dense(&img, &pattern, 2, "a").unwrap();
        let m = subsample_descriptors(&[&set], 500_000, 1).unwrap();
        assert_eq!(m.rows(), set.len());

        let one = subsample_descriptors(&[&set], 1, 1).unwrap();
        assert_eq!(one.rows(), 1);

        let again = subsample_descriptors(&[&set], 3, 42).unwrap();
        let again2 = subsample_descriptors(&[&set], 3, 42).unwrap();
        assert_eq!(again, again2);
    }

    #[test]
    fn file_subsample_matches_population() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        let mut all_rows = Vec::new();
        for f in 0..3 {
            let rows = 4 + f;
            let flat: Vec<f64> = (0..rows * 2).map(|i| (f * 100 + i) as f64).collect();
            all_rows.extend(flat.chunks(2).map(|c| c.to_vec()));
            let p = dir.path().join(format!("{f}.bgd"));
            crate::matrix::write_f32_matrix(&p, 2, &flat).unwrap();
            paths.push(p);
        }
        // taking more than the population keeps everything, in order
        let m = subsample_descriptor_files(&paths, 1000, 7).unwrap();
        assert_eq!(m.rows(), all_rows.len());
        for (i, row) in m.iter_rows().enumerate() {
            assert_eq!(row, &all_rows[i][..]);
        }
        // strict subsets are deterministic and drawn from the population
        let a = subsample_descriptor_files(&paths, 5, 42).unwrap();
        let b = subsample_descriptor_files(&paths, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows(), 5);
        for row in a.iter_rows() {
            assert!(all_rows.iter().any(|r| r == row));
        }
    }

    #[test]
    fn kmeans_exact_cover() {
        let data = matrix_from(&[&[0.0, 0.0], &[10.0, 0.0], &[0.0, 10.0]]);
        let (cb, trace) = kmeans_fit_traced(
            &data,
            &KmeansConfig {
                k: 3,
                max_iters: 50,
                tol: 1e-9,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(*trace.last().unwrap(), 0.0);
        let mut got: Vec<Vec<f64>> = cb.centers.iter_rows().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![vec![0.0, 0.0], vec![0.0, 10.0], vec![10.0, 0.0]]);
    }

    #[test]
    fn kmeans_single_cluster_is_the_centroid() {
        let data = matrix_from(&[&[1.0, 2.0], &[3.0, 6.0], &[5.0, 4.0]]);
        let cb = kmeans_fit(
            &data,
            &KmeansConfig {
                k: 1,
                max_iters: 10,
                tol: 1e-9,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(cb.centers.row(0), &[3.0, 4.0]);
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut data = FeatureMatrix::new(2);
        gaussian_blob(&mut rng, &[0.0, 0.0], 0.3, 400, &mut data);
        gaussian_blob(&mut rng, &[8.0, 8.0], 0.3, 400, &mut data);
        let (cb, trace) = kmeans_fit_traced(
            &data,
            &KmeansConfig {
                k: 2,
                max_iters: 100,
                tol: 1e-9,
                seed: 5,
            },
        )
        .unwrap();
        // WCSS never increases
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + mono_slack(w[0]));
        }
        let mut centers: Vec<Vec<f64>> = cb.centers.iter_rows().map(|r| r.to_vec()).collect();
        centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!(dist2(&centers[0], &[0.0, 0.0]).sqrt() < 0.1);
        assert!(dist2(&centers[1], &[8.0, 8.0]).sqrt() < 0.1);
    }

    #[test]
    fn kmeans_requires_enough_rows() {
        let data = matrix_from(&[&[1.0], &[2.0]]);
        assert!(kmeans_fit(&data, &KmeansConfig { k: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn kmeans_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = FeatureMatrix::new(3);
        gaussian_blob(&mut rng, &[0.0, 1.0, 2.0], 1.0, 200, &mut data);
        let cfg = KmeansConfig {
            k: 5,
            max_iters: 30,
            tol: 1e-9,
            seed: 9,
        };
        assert_eq!(kmeans_fit(&data, &cfg).unwrap(), kmeans_fit(&data, &cfg).unwrap());
    }

    #[test]
    fn gmm_single_component_is_the_mle() {
        let data = matrix_from(&[&[1.0, 10.0], &[3.0, 14.0]]);
        let model = gmm_fit(
            &data,
            &GmmConfig {
                k: 1,
                max_iters: 20,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.priors, vec![1.0]);
        assert_eq!(model.means.row(0), &[2.0, 12.0]);
        // population variances: 1 and 4
        assert!((model.variances.row(0)[0] - 1.0).abs() < 1e-12);
        assert!((model.variances.row(0)[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_recovers_two_separated_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut data = FeatureMatrix::new(2);
        let n = 600;
        gaussian_blob(&mut rng, &[-4.0, 0.0], 0.5, n, &mut data);
        gaussian_blob(&mut rng, &[4.0, 1.0], 0.7, n, &mut data);
        let (model, trace) = gmm_fit_traced(
            &data,
            &GmmConfig {
                k: 2,
                max_iters: 100,
                tol: 1e-9,
                ..Default::default()
            },
        )
        .unwrap();
        for w in trace.windows(2) {
            assert!(w[1] + mono_slack(w[0]) >= w[0]);
        }
        let mut means: Vec<Vec<f64>> = model.means.iter_rows().map(|r| r.to_vec()).collect();
        means.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        // 3 standard errors of the blob mean estimate
        let se_a = 0.5 / (n as f64).sqrt();
        let se_b = 0.7 / (n as f64).sqrt();
        assert!((means[0][0] - -4.0).abs() < 3.0 * se_a);
        assert!((means[0][1] - 0.0).abs() < 3.0 * se_a);
        assert!((means[1][0] - 4.0).abs() < 3.0 * se_b);
        assert!((means[1][1] - 1.0).abs() < 3.0 * se_b);
        assert!((model.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_basics() {
        let single = GmmModel {
            priors: vec![1.0],
            means: matrix_from(&[&[0.0, 0.0]]),
            variances: matrix_from(&[&[1.0, 1.0]]),
        };
        assert_eq!(posterior(&single, &[5.0, -3.0]), vec![1.0]);

        let two = GmmModel {
            priors: vec![0.5, 0.5],
            means: matrix_from(&[&[-20.0], &[20.0]]),
            variances: matrix_from(&[&[1.0], &[1.0]]),
        };
        let at_first = posterior(&two, &[-20.0]);
        assert!(at_first[0] > 0.999);
        let mid = posterior(&two, &[0.0]);
        assert_eq!(mid, vec![0.5, 0.5]);
    }

    #[test]
    fn model_files_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut data = FeatureMatrix::new(4);
        gaussian_blob(&mut rng, &[0.1, -0.2, 0.3, 7.0], 1.3, 100, &mut data);

        let cb = kmeans_fit(&data, &KmeansConfig { k: 4, ..Default::default() }).unwrap();
        let cb_path = dir.path().join("cb.txt");
        save_codebook(&cb, &cb_path).unwrap();
        assert_eq!(load_codebook(&cb_path).unwrap(), cb);

        let gmm = gmm_fit(&data, &GmmConfig { k: 3, ..Default::default() }).unwrap();
        let gmm_path = dir.path().join("gmm.txt");
        save_gmm(&gmm, &gmm_path).unwrap();
        assert_eq!(load_gmm(&gmm_path).unwrap(), gmm);

        // kind mismatch is a parse error
        assert!(matches!(
            load_codebook(&gmm_path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn posterior_sums_to_one(seed in 0u64..200, x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut data = FeatureMatrix::new(2);
            gaussian_blob(&mut rng, &[0.0, 0.0], 2.0, 40, &mut data);
            let model = gmm_fit(&data, &GmmConfig { k: 3, max_iters: 15, ..Default::default() }).unwrap();
            let h = posterior(&model, &[x0, x1]);
            let total: f64 = h.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(h.iter().all(|&v| v >= 0.0));
        }
    }
}
