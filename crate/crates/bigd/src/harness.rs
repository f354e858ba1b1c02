//! Dataset ingestion, split protocols, and repeated train/test evaluation.
//!
//! A dataset is a directory with one subdirectory of images per class,
//! optionally accompanied by a root-level `groups.txt` that tags each image
//! with a physical-sample group (one `class/filename<whitespace>group` line
//! per image). Splits are drawn per protocol, the whole pipeline runs once
//! per split with training-only vocabulary fitting, and accuracies are
//! aggregated as mean and population standard deviation.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::{self, SvmConfig};
use crate::codebook::{self, GmmConfig, KmeansConfig};
use crate::descriptor::{extract_dense, DescriptorSet};
use crate::encoding::{fv_encode, vlad_encode, EncoderKind, FvScaling};
use crate::error::{Error, Result};
use crate::imageio::{load_grayscale, resize, ResizeMethod};
use crate::matrix::FeatureMatrix;
use crate::sampling::SamplingPattern;

/// One class directory: file names (relative to the class directory) plus
/// optional per-image group tags, parallel to `files`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    pub files: Vec<String>,
    pub groups: Option<Vec<String>>,
}

/// An image corpus; `root` is present when the images are on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: Option<PathBuf>,
    pub classes: Vec<ClassEntry>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Dataset("no classes found".into()));
        }
        for class in &self.classes {
            if class.files.is_empty() {
                return Err(Error::Dataset(format!("class `{}` has no images", class.name)));
            }
            if let Some(groups) = &class.groups {
                if groups.len() != class.files.len() {
                    return Err(Error::Dataset(format!(
                        "class `{}`: group tags must cover all images ({} tags for {} images)",
                        class.name,
                        groups.len(),
                        class.files.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_images(&self) -> usize {
        self.classes.iter().map(|c| c.files.len()).sum()
    }

    /// Flat image list as `(class_index, file_index)`, classes in order.
    pub fn flatten(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.total_images());
        for (ci, class) in self.classes.iter().enumerate() {
            for fi in 0..class.files.len() {
                out.push((ci, fi));
            }
        }
        out
    }

    /// Class label of every flat image index.
    pub fn labels(&self) -> Vec<usize> {
        self.flatten().into_iter().map(|(c, _)| c).collect()
    }

    /// Stable provenance id: `class/filename`.
    pub fn image_id(&self, ci: usize, fi: usize) -> String {
        format!("{}/{}", self.classes[ci].name, self.classes[ci].files[fi])
    }

    pub fn image_path(&self, ci: usize, fi: usize) -> Result<PathBuf> {
        let root = self.root.as_ref().ok_or_else(|| {
            Error::Dataset("dataset has no root directory; images are not on disk".into())
        })?;
        Ok(root
            .join(&self.classes[ci].name)
            .join(&self.classes[ci].files[fi]))
    }
}

const IMAGE_EXTENSIONS: [&str; 2] = ["png", "pgm"];

/// Scans `root` into a [`Dataset`] with deterministic lexicographic ordering
/// of classes and files, reading `groups.txt` when present.
pub fn scan_dataset(root: &Path) -> Result<Dataset> {
    let mut class_names = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            class_names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    class_names.sort();
    if class_names.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories under {}",
            root.display()
        )));
    }

    let mut classes = Vec::with_capacity(class_names.len());
    for name in class_names {
        let dir = root.join(&name);
        let mut files = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            let is_image = path.is_file()
                && path
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if is_image {
                files.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "class `{name}` has no images under {}",
                dir.display()
            )));
        }
        classes.push(ClassEntry {
            name,
            files,
            groups: None,
        });
    }

    let mut ds = Dataset {
        root: Some(root.to_path_buf()),
        classes,
    };
    let groups_path = root.join("groups.txt");
    if groups_path.exists() {
        apply_groups(&mut ds, &groups_path)?;
    }
    ds.validate()?;
    Ok(ds)
}

fn apply_groups(ds: &mut Dataset, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags: Vec<Vec<Option<String>>> = ds
        .classes
        .iter()
        .map(|c| vec![None; c.files.len()])
        .collect();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (image, group) = line
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| Error::parse(path, i + 1, "expected `class/filename group`"))?;
        let (class_name, file_name) = image
            .trim()
            .split_once('/')
            .ok_or_else(|| Error::parse(path, i + 1, "image must be `class/filename`"))?;
        let ci = ds
            .classes
            .iter()
            .position(|c| c.name == class_name)
            .ok_or_else(|| Error::parse(path, i + 1, format!("unknown class `{class_name}`")))?;
        let fi = ds.classes[ci]
            .files
            .iter()
            .position(|f| f == file_name)
            .ok_or_else(|| Error::parse(path, i + 1, format!("unknown image `{image}`")))?;
        tags[ci][fi] = Some(group.trim().to_string());
    }
    for (ci, class_tags) in tags.into_iter().enumerate() {
        let tagged = class_tags.iter().filter(|t| t.is_some()).count();
        if tagged == 0 {
            continue;
        }
        if tagged != class_tags.len() {
            return Err(Error::Dataset(format!(
                "class `{}`: groups.txt tags {} of {} images; tags must cover the class",
                ds.classes[ci].name,
                tagged,
                class_tags.len()
            )));
        }
        ds.classes[ci].groups = Some(class_tags.into_iter().map(Option::unwrap).collect());
    }
    Ok(())
}

/// Tab-separated manifest (`class<TAB>file<TAB>group-or--`), letting
/// downstream stages recompute splits without the original image tree.
pub fn write_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = String::new();
    for class in &ds.classes {
        for (fi, file) in class.files.iter().enumerate() {
            let group = class
                .groups
                .as_ref()
                .map_or("-", |g| g[fi].as_str());
            out.push_str(&format!("{}\t{}\t{}\n", class.name, file, group));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut classes: Vec<ClassEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected `class\\tfile\\tgroup`"));
        }
        let (class_name, file, group) = (fields[0], fields[1], fields[2]);
        if classes.last().is_none_or(|c| c.name != class_name) {
            classes.push(ClassEntry {
                name: class_name.to_string(),
                files: Vec::new(),
                groups: if group == "-" { None } else { Some(Vec::new()) },
            });
        }
        let class = classes.last_mut().unwrap();
        class.files.push(file.to_string());
        match (&mut class.groups, group) {
            (None, "-") => {}
            (Some(g), tag) if tag != "-" => g.push(tag.to_string()),
            _ => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "mixed tagged and untagged images in one class",
                ))
            }
        }
    }
    let ds = Dataset {
        root: None,
        classes,
    };
    ds.validate()?;
    Ok(ds)
}

/// How train and test sets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    /// Per class: floor(n/2) training images, the rest for testing.
    RandomHalf,
    /// Per class: fixed train/test counts drawn at random.
    RandomRatio { train: usize, test: usize },
    /// Split by physical-sample group tags, e.g. 3 training groups and 1
    /// test group. Distinct holdouts are enumerated first, then reshuffled.
    GroupHoldout { train_groups: usize, test_groups: usize },
}

impl std::fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolMode::RandomHalf => write!(f, "random_half"),
            ProtocolMode::RandomRatio { train, test } => write!(f, "ratio:{train}:{test}"),
            ProtocolMode::GroupHoldout {
                train_groups,
                test_groups,
            } => write!(f, "groups:{train_groups}:{test_groups}"),
        }
    }
}

impl std::str::FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random_half" {
            return Ok(ProtocolMode::RandomHalf);
        }
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad protocol count `{v}`")))
        };
        match parts.as_slice() {
            ["ratio", a, b] => Ok(ProtocolMode::RandomRatio {
                train: parse(a)?,
                test: parse(b)?,
            }),
            ["groups", a, b] => Ok(ProtocolMode::GroupHoldout {
                train_groups: parse(a)?,
                test_groups: parse(b)?,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown protocol `{s}` (random_half, ratio:T:E, or groups:T:E)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub mode: ProtocolMode,
    pub repetitions: usize,
    pub seed: u64,
}

/// Disjoint train/test index sets over the dataset's flat image order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Lexicographic k-combinations of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(combo.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Draws `protocol.repetitions` independent splits, deterministic in the
/// protocol seed.
pub fn make_splits(ds: &Dataset, protocol: &Protocol) -> Result<Vec<Split>> {
    ds.validate()?;
    if protocol.repetitions == 0 {
        return Err(Error::Protocol("repetitions must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);

    // flat index of (class, file)
    let mut base = Vec::with_capacity(ds.classes.len());
    let mut acc = 0usize;
    for class in &ds.classes {
        base.push(acc);
        acc += class.files.len();
    }

    match protocol.mode {
        ProtocolMode::RandomHalf | ProtocolMode::RandomRatio { .. } => {
            let counts: Vec<(usize, usize)> = match protocol.mode {
                ProtocolMode::RandomHalf => ds
                    .classes
                    .iter()
                    .map(|c| {
                        let n = c.files.len();
                        (n / 2, n - n / 2)
                    })
                    .collect(),
                ProtocolMode::RandomRatio { train, test } => {
                    for class in &ds.classes {
                        if class.files.len() < train + test {
                            return Err(Error::Protocol(format!(
                                "class `{}` has {} images, protocol needs {}+{}",
                                class.name,
                                class.files.len(),
                                train,
                                test
                            )));
                        }
                    }
                    vec![(train, test); ds.classes.len()]
                }
                ProtocolMode::GroupHoldout { .. } => unreachable!(),
            };
            for (class, &(train, test)) in ds.classes.iter().zip(&counts) {
                if train == 0 || test == 0 {
                    return Err(Error::Protocol(format!(
                        "class `{}` with {} images cannot form a non-empty split",
                        class.name,
                        class.files.len()
                    )));
                }
            }
            let mut splits = Vec::with_capacity(protocol.repetitions);
            for _ in 0..protocol.repetitions {
                let mut split = Split {
                    train: Vec::new(),
                    test: Vec::new(),
                };
                for (ci, class) in ds.classes.iter().enumerate() {
                    let mut idx: Vec<usize> = (0..class.files.len()).collect();
                    idx.shuffle(&mut rng);
                    let (n_train, n_test) = counts[ci];
                    split
                        .train
                        .extend(idx[..n_train].iter().map(|&fi| base[ci] + fi));
                    split
                        .test
                        .extend(idx[n_train..n_train + n_test].iter().map(|&fi| base[ci] + fi));
                }
                splits.push(split);
            }
            Ok(splits)
        }
        ProtocolMode::GroupHoldout {
            train_groups,
            test_groups,
        } => {
            // every class must carry the same group label set
            let mut label_set: Option<BTreeSet<String>> = None;
            for class in &ds.classes {
                let groups = class.groups.as_ref().ok_or_else(|| {
                    Error::Protocol(format!(
                        "class `{}` has no group tags; group holdout needs groups.txt",
                        class.name
                    ))
                })?;
                let labels: BTreeSet<String> = groups.iter().cloned().collect();
                match &label_set {
                    None => label_set = Some(labels),
                    Some(expected) if *expected != labels => {
                        return Err(Error::Protocol(format!(
                            "class `{}` has groups {:?}, expected {:?}",
                            class.name, labels, expected
                        )))
                    }
                    _ => {}
                }
            }
            let labels: Vec<String> = label_set.unwrap().into_iter().collect();
            if train_groups + test_groups != labels.len() {
                return Err(Error::Protocol(format!(
                    "{} train + {} test groups requested but dataset has {} ({:?})",
                    train_groups,
                    test_groups,
                    labels.len(),
                    labels
                )));
            }
            let combos = combinations(labels.len(), test_groups);
            let mut splits = Vec::with_capacity(protocol.repetitions);
            for rep in 0..protocol.repetitions {
                let combo = if rep < combos.len() {
                    &combos[rep]
                } else {
                    &combos[rng.random_range(0..combos.len())]
                };
                let test_labels: HashSet<&String> = combo.iter().map(|&i| &labels[i]).collect();
                let mut split = Split {
                    train: Vec::new(),
                    test: Vec::new(),
                };
                for (ci, class) in ds.classes.iter().enumerate() {
                    let groups = class.groups.as_ref().unwrap();
                    for (fi, group) in groups.iter().enumerate() {
                        if test_labels.contains(group) {
                            split.test.push(base[ci] + fi);
                        } else {
                            split.train.push(base[ci] + fi);
                        }
                    }
                }
                splits.push(split);
            }
            Ok(splits)
        }
    }
}

/// Seeds for one split's fitting stages, derived from the stage base seeds.
#[derive(Debug, Clone, Copy)]
pub struct SplitSeeds {
    pub subsample: u64,
    pub fit: u64,
    pub svm: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub split: u64,
    pub codebook: u64,
    pub svm: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

pub fn split_seeds(seeds: &StageSeeds, split: usize) -> SplitSeeds {
    SplitSeeds {
        subsample: derive_seed(seeds.codebook, 2 * split as u64),
        fit: derive_seed(seeds.codebook, 2 * split as u64 + 1),
        svm: derive_seed(seeds.svm, split as u64),
    }
}

/// Optional resize applied to every image on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResizeSpec {
    pub width: usize,
    pub height: usize,
    pub method: ResizeMethod,
}

/// Everything `evaluate` needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub pattern: SamplingPattern,
    pub step: usize,
    pub resize: Option<ResizeSpec>,
    pub encoder: EncoderKind,
    pub clusters: usize,
    pub fv_scaling: FvScaling,
    pub subsample_max: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub variance_floor_scale: f64,
    /// `None` resolves to `1 / (#classes * #train images)` per split.
    pub lambda: Option<f64>,
    /// `None` resolves to a budget of 100 subgradient passes.
    pub svm_epochs: Option<usize>,
    pub protocol: Protocol,
    pub seeds: StageSeeds,
}

impl EvalConfig {
    /// Full parameter record echoed into reports, in fixed key order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let scales = self
            .pattern
            .scales
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let mut kv = vec![
            ("encoder".into(), self.encoder.to_string()),
            ("patch_size".into(), self.pattern.patch_size.to_string()),
            ("step".into(), self.step.to_string()),
            ("scales".into(), scales),
            (
                "pairs_per_scale".into(),
                self.pattern.pairs_per_scale.to_string(),
            ),
            ("clusters".into(), self.clusters.to_string()),
            ("subsample_max".into(), self.subsample_max.to_string()),
            ("kmeans_max_iters".into(), self.kmeans_max_iters.to_string()),
            ("kmeans_tol".into(), self.kmeans_tol.to_string()),
            ("gmm_max_iters".into(), self.gmm_max_iters.to_string()),
            ("gmm_tol".into(), self.gmm_tol.to_string()),
            (
                "variance_floor_scale".into(),
                self.variance_floor_scale.to_string(),
            ),
            ("fv_scaling".into(), self.fv_scaling.to_string()),
            (
                "lambda".into(),
                self.lambda.map_or("auto".into(), |l| l.to_string()),
            ),
            (
                "svm_epochs".into(),
                self.svm_epochs.map_or("auto".into(), |e| e.to_string()),
            ),
            ("protocol".into(), self.protocol.mode.to_string()),
            ("repetitions".into(), self.protocol.repetitions.to_string()),
            ("seed_pattern".into(), self.pattern.seed.to_string()),
            ("seed_split".into(), self.protocol.seed.to_string()),
            ("seed_codebook".into(), self.seeds.codebook.to_string()),
            ("seed_svm".into(), self.seeds.svm.to_string()),
        ];
        if let Some(r) = &self.resize {
            let method = match r.method {
                ResizeMethod::Bilinear => "bilinear",
                ResizeMethod::Bicubic => "bicubic",
            };
            kv.push(("resize".into(), format!("{}x{}:{}", r.width, r.height, method)));
        } else {
            kv.push(("resize".into(), "none".into()));
        }
        kv
    }
}

/// Per-split accuracies with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Accuracy per split, in percent.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Config echo, fixed order.
    pub echo: Vec<(String, String)>,
}

impl RunReport {
    pub fn from_accuracies(accuracies: Vec<f64>, echo: Vec<(String, String)>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        RunReport {
            accuracies,
            mean,
            std: var.sqrt(),
            echo,
        }
    }

    /// Machine-readable key-value lines, bit-stable for identical runs.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str(&format!("splits={}\n", self.accuracies.len()));
        for (i, a) in self.accuracies.iter().enumerate() {
            out.push_str(&format!("split_{i:02}_accuracy={a}\n"));
        }
        out.push_str(&format!("accuracy_mean={}\n", self.mean));
        out.push_str(&format!("accuracy_std={}\n", self.std));
        out
    }

    /// Human-readable report.
    pub fn render_text(&self) -> String {
        let mut out = String::from("BIGD evaluation\n");
        for (k, v) in &self.echo {
            out.push_str(&format!("  {k} = {v}\n"));
        }
        for (i, a) in self.accuracies.iter().enumerate() {
            out.push_str(&format!("  split {i:02}: {a:.2}%\n"));
        }
        out.push_str(&format!(
            "  accuracy: {:.2}% +/- {:.2}% over {} split(s)\n",
            self.mean,
            self.std,
            self.accuracies.len()
        ));
        out
    }
}

/// The fitted vocabulary of one split.
enum SplitModel {
    Codebook(codebook::Codebook),
    Gmm(codebook::GmmModel),
}

fn load_image(ds: &Dataset, ci: usize, fi: usize, cfg: &EvalConfig) -> Result<crate::GrayImage> {
    let img = load_grayscale(&ds.image_path(ci, fi)?)?;
    match cfg.resize {
        Some(spec) => resize(&img, spec.width, spec.height, spec.method),
        None => Ok(img),
    }
}

/// Runs the full protocol: per split, fit the vocabulary on training
/// descriptors only, encode, train the SVM, and score the test images.
pub fn evaluate(ds: &Dataset, cfg: &EvalConfig) -> Result<RunReport> {
    ds.validate()?;
    let splits = make_splits(ds, &cfg.protocol)?;
    let flat = ds.flatten();
    let labels = ds.labels();

    // one descriptor set per image, shared by all splits
    let sets: Vec<DescriptorSet> = flat
        .par_iter()
        .map(|&(ci, fi)| {
            let img = load_image(ds, ci, fi, cfg)?;
            extract_dense(&img, &cfg.pattern, cfg.step, ds.image_id(ci, fi))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut accuracies = Vec::with_capacity(splits.len());
    for (si, split) in splits.iter().enumerate() {
        let acc = evaluate_split(ds, cfg, split, si, &sets, &labels)
            .map_err(|e| e.annotate(&format!("split {si}")))?;
        accuracies.push(acc);
    }

    let mut echo = cfg.echo();
    echo.push(("classes".into(), ds.classes.len().to_string()));
    echo.push(("images".into(), ds.total_images().to_string()));
    // interior patch count vs the nominal step-lattice count of the first
    // image; the two differ because patches must fit fully inside
    if let Some(first) = sets.first() {
        echo.push(("patches_interior".into(), first.len().to_string()));
        let (w, h) = match cfg.resize {
            Some(r) => (r.width, r.height),
            None => {
                let img = load_image(ds, flat[0].0, flat[0].1, cfg)?;
                (img.width(), img.height())
            }
        };
        let nominal = w.div_ceil(cfg.step) * h.div_ceil(cfg.step);
        echo.push(("patches_nominal".into(), nominal.to_string()));
    }
    Ok(RunReport::from_accuracies(accuracies, echo))
}

fn evaluate_split(
    ds: &Dataset,
    cfg: &EvalConfig,
    split: &Split,
    split_idx: usize,
    sets: &[DescriptorSet],
    labels: &[usize],
) -> Result<f64> {
    let seeds = split_seeds(&cfg.seeds, split_idx);

    // vocabulary from training descriptors only
    let train_sets: Vec<&DescriptorSet> = split.train.iter().map(|&i| &sets[i]).collect();
    let train_ids: HashSet<&str> = split
        .train
        .iter()
        .map(|&i| sets[i].image_id.as_str())
        .collect();
    assert!(
        train_sets.iter().all(|s| train_ids.contains(s.image_id.as_str())),
        "descriptor provenance violated: non-training image in vocabulary fit"
    );
    let sample = codebook::subsample_descriptors(&train_sets, cfg.subsample_max, seeds.subsample)?;
    let model = match cfg.encoder {
        EncoderKind::Vlad => SplitModel::Codebook(codebook::kmeans_fit(
            &sample,
            &KmeansConfig {
                k: cfg.clusters,
                max_iters: cfg.kmeans_max_iters,
                tol: cfg.kmeans_tol,
                seed: seeds.fit,
            },
        )?),
        EncoderKind::Ifv => SplitModel::Gmm(codebook::gmm_fit(
            &sample,
            &GmmConfig {
                k: cfg.clusters,
                max_iters: cfg.gmm_max_iters,
                tol: cfg.gmm_tol,
                variance_floor_scale: cfg.variance_floor_scale,
                seed: seeds.fit,
            },
        )?),
    };

    // encode exactly the images this split touches
    let needed: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    let encoded: Vec<(usize, Vec<f64>)> = needed
        .par_iter()
        .map(|&i| {
            let enc = match &model {
                SplitModel::Codebook(cb) => vlad_encode(cb, &sets[i])?,
                SplitModel::Gmm(gmm) => fv_encode(gmm, &sets[i], cfg.fv_scaling)?,
            };
            Ok((i, enc.values))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = encoded[0].1.len();
    let mut by_index: Vec<Option<Vec<f64>>> = vec![None; sets.len()];
    for (i, v) in encoded {
        by_index[i] = Some(v);
    }

    let mut x_train = FeatureMatrix::new(dim);
    let mut y_train = Vec::with_capacity(split.train.len());
    for &i in &split.train {
        x_train.push_row(by_index[i].as_ref().unwrap())?;
        y_train.push(labels[i]);
    }
    let lambda = cfg
        .lambda
        .unwrap_or_else(|| classifier::default_lambda(ds.classes.len(), split.train.len()));
    let epochs = cfg.svm_epochs.unwrap_or_else(|| {
        classifier::epochs_for_iteration_budget(100 * split.train.len(), split.train.len())
    });
    let svm = classifier::svm_train(
        &x_train,
        &y_train,
        &SvmConfig {
            lambda,
            max_epochs: epochs,
            seed: seeds.svm,
        },
    )?;

    let mut correct = 0usize;
    for &i in &split.test {
        if classifier::svm_predict(&svm, by_index[i].as_ref().unwrap())? == labels[i] {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / split.test.len() as f64)
}
