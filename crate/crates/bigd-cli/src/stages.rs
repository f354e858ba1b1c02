//! Stage commands. Each writes its artifacts under the output directory and
//! logs a content hash per artifact; `pipeline` is the stages run in
//! sequence over the same files, so stage-by-stage runs and pipeline runs
//! produce identical artifacts and metrics.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use bigd::classifier::{
    accuracy_percent, default_lambda, epochs_for_iteration_budget, load_svm, save_svm, svm_train,
    SvmConfig,
};
use bigd::codebook::{
    gmm_fit, kmeans_fit, load_codebook, load_gmm, save_codebook, save_gmm,
    subsample_descriptor_files, GmmConfig, KmeansConfig,
};
use bigd::descriptor::{extract_dense, DescriptorSet};
use bigd::encoding::{fv_encode, read_labels, vlad_encode, write_labels, EncoderKind};
use bigd::error::Error;
use bigd::gradients::{sobel, Channel, CHANNELS};
use bigd::harness::{
    make_splits, read_manifest, scan_dataset, split_seeds, write_manifest, Dataset, RunReport,
    Split,
};
use bigd::imageio::{load_grayscale, patch_grid, resize, GrayImage};
use bigd::matrix::{read_f32_matrix, write_f32_matrix};
use bigd::sampling::{load_pattern, sample_pattern, save_pattern, SamplingPattern};
use bigd::synth::write_pgm;

use crate::config::RunConfig;
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

/// Artifact layout under the output directory.
pub struct OutPaths {
    out: PathBuf,
}

impl OutPaths {
    pub fn new(out: &Path) -> Self {
        OutPaths { out: out.to_path_buf() }
    }

    pub fn pattern(&self) -> PathBuf {
        self.out.join("pattern.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.tsv")
    }

    pub fn descriptor(&self, class: &str, file: &str) -> PathBuf {
        self.out.join("desc").join(class).join(format!("{file}.bgd"))
    }

    pub fn model(&self, split: usize) -> PathBuf {
        self.out.join(format!("model_s{split:02}.txt"))
    }

    pub fn encoded(&self, split: usize, part: &str) -> PathBuf {
        self.out.join(format!("enc_s{split:02}_{part}.bin"))
    }

    pub fn labels(&self, split: usize, part: &str) -> PathBuf {
        self.out.join(format!("enc_s{split:02}_{part}.labels"))
    }

    pub fn svm(&self, split: usize) -> PathBuf {
        self.out.join(format!("svm_s{split:02}.txt"))
    }

    pub fn metrics_kv(&self) -> PathBuf {
        self.out.join("metrics.kv")
    }

    pub fn metrics_txt(&self) -> PathBuf {
        self.out.join("metrics.txt")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn log_artifact(stage: &str, path: &Path) -> CliResult<()> {
    println!("[{stage}] wrote {} sha256={}", path.display(), file_sha256(path)?);
    Ok(())
}

fn require(stage: &'static str, path: &Path) -> CliResult<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage,
            path: path.to_path_buf(),
        }
        .into());
    }
    Ok(())
}

fn dataset_root(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.dataset
        .as_deref()
        .ok_or_else(|| CliError::Usage("no dataset configured (set dataset=PATH)".into()))
}

fn ensure_out(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(())
}

fn load_pattern_artifact(paths: &OutPaths) -> CliResult<SamplingPattern> {
    require("pattern", &paths.pattern())?;
    Ok(load_pattern(&paths.pattern())?)
}

fn load_manifest_artifact(paths: &OutPaths) -> CliResult<Dataset> {
    require("extract", &paths.manifest())?;
    Ok(read_manifest(&paths.manifest())?)
}

fn splits_for(cfg: &RunConfig, ds: &Dataset) -> CliResult<Vec<Split>> {
    Ok(make_splits(ds, &cfg.protocol_struct())?)
}

/// Descriptor artifact paths in flat image order.
fn descriptor_paths(paths: &OutPaths, ds: &Dataset) -> Vec<PathBuf> {
    ds.flatten()
        .into_iter()
        .map(|(ci, fi)| paths.descriptor(&ds.classes[ci].name, &ds.classes[ci].files[fi]))
        .collect()
}

pub fn cmd_pattern(cfg: &RunConfig) -> CliResult<()> {
    ensure_out(cfg)?;
    let paths = OutPaths::new(&cfg.out);
    let pattern = sample_pattern(
        cfg.patch_size,
        &cfg.scales,
        cfg.pairs_per_scale,
        cfg.seed_pattern,
    )?;
    save_pattern(&pattern, &paths.pattern())?;
    println!(
        "[pattern] {} pairs over scales {:?}, descriptor dim {}",
        pattern.total_pairs(),
        pattern.scales,
        pattern.descriptor_len()
    );
    log_artifact("pattern", &paths.pattern())
}

fn load_input_image(cfg: &RunConfig, path: &Path) -> CliResult<GrayImage> {
    let img = load_grayscale(path)?;
    Ok(match cfg.resize {
        Some(spec) => resize(&img, spec.width, spec.height, spec.method)?,
        None => img,
    })
}

pub fn cmd_extract(cfg: &RunConfig, dump_channels: Option<&Path>) -> CliResult<()> {
    ensure_out(cfg)?;
    let paths = OutPaths::new(&cfg.out);
    let pattern = load_pattern_artifact(&paths)?;
    let ds = scan_dataset(dataset_root(cfg)?)?;
    write_manifest(&paths.manifest(), &ds)?;

    let flat = ds.flatten();
    let desc_paths = descriptor_paths(&paths, &ds);
    for class in &ds.classes {
        let dir = cfg.out.join("desc").join(&class.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    flat.par_iter()
        .zip(&desc_paths)
        .map(|(&(ci, fi), out_path)| {
            let img = load_input_image(cfg, &ds.image_path(ci, fi)?)?;
            let set = extract_dense(&img, &pattern, cfg.step, ds.image_id(ci, fi))?;
            set.write(out_path)?;
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;

    // interior vs nominal patch counts of the first image (they differ
    // because patches must lie fully inside the image)
    let first = load_input_image(cfg, &ds.image_path(flat[0].0, flat[0].1)?)?;
    let interior = patch_grid(&first, cfg.patch_size, cfg.step)?.centers.len();
    let nominal = first.width().div_ceil(cfg.step) * first.height().div_ceil(cfg.step);
    println!(
        "[extract] {} images, {} patches/image interior ({} nominal), descriptor dim {}",
        flat.len(),
        interior,
        nominal,
        pattern.descriptor_len()
    );
    log_artifact("extract", &paths.manifest())?;

    // one hash over the descriptor tree keeps the log auditable without a
    // line per image
    let mut tree = Sha256::new();
    for p in &desc_paths {
        tree.update(file_sha256(p)?.as_bytes());
    }
    println!(
        "[extract] descriptor tree sha256={} ({} files)",
        hex(&tree.finalize()),
        desc_paths.len()
    );

    if let Some(dir) = dump_channels {
        dump_channel_maps(&first, dir)?;
    }
    Ok(())
}

/// Debug dump: the five channel maps of `img`, min-max scaled to 8 bits.
fn dump_channel_maps(img: &GrayImage, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let maps = sobel(img);
    for ch in CHANNELS {
        let name = match ch {
            Channel::Intensity => "intensity",
            Channel::GradX => "grad_x",
            Channel::GradY => "grad_y",
            Channel::AbsGradX => "abs_grad_x",
            Channel::AbsGradY => "abs_grad_y",
        };
        let map = maps.map(ch);
        let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
        let bytes: Vec<u8> = map.iter().map(|v| ((v - lo) * scale).round() as u8).collect();
        let path = dir.join(format!("channel_{name}.pgm"));
        write_pgm(&path, img.width(), img.height(), &bytes)?;
        log_artifact("extract", &path)?;
    }
    Ok(())
}

pub fn cmd_codebook(cfg: &RunConfig) -> CliResult<()> {
    let paths = OutPaths::new(&cfg.out);
    let ds = load_manifest_artifact(&paths)?;
    let desc_paths = descriptor_paths(&paths, &ds);
    if let Some(missing) = desc_paths.iter().find(|p| !p.exists()) {
        return require("extract", missing);
    }
    let splits = splits_for(cfg, &ds)?;
    for (si, split) in splits.iter().enumerate() {
        let seeds = split_seeds(&cfg.stage_seeds(), si);
        let train_paths: Vec<PathBuf> =
            split.train.iter().map(|&i| desc_paths[i].clone()).collect();
        let sample = subsample_descriptor_files(&train_paths, cfg.subsample, seeds.subsample)?;
        let model_path = paths.model(si);
        match cfg.encoder {
            EncoderKind::Vlad => {
                let cb = kmeans_fit(
                    &sample,
                    &KmeansConfig {
                        k: cfg.clusters,
                        max_iters: cfg.kmeans_iters,
                        tol: cfg.kmeans_tol,
                        seed: seeds.fit,
                    },
                )
                .map_err(|e| Error::annotate(e, &format!("split {si}")))?;
                save_codebook(&cb, &model_path)?;
            }
            EncoderKind::Ifv => {
                let gmm = gmm_fit(
                    &sample,
                    &GmmConfig {
                        k: cfg.clusters,
                        max_iters: cfg.gmm_iters,
                        tol: cfg.gmm_tol,
                        variance_floor_scale: cfg.variance_floor,
                        seed: seeds.fit,
                    },
                )
                .map_err(|e| Error::annotate(e, &format!("split {si}")))?;
                save_gmm(&gmm, &model_path)?;
            }
        }
        println!(
            "[codebook] split {si}: {} vocabulary from {} descriptors",
            cfg.encoder,
            sample.rows()
        );
        log_artifact("codebook", &model_path)?;
    }
    Ok(())
}

/// The fitted vocabulary of one split, loaded back from its artifact.
enum Vocabulary {
    Codebook(bigd::Codebook),
    Gmm(bigd::GmmModel),
}

fn load_vocabulary(cfg: &RunConfig, paths: &OutPaths, split: usize) -> CliResult<Vocabulary> {
    let path = paths.model(split);
    require("codebook", &path)?;
    Ok(match cfg.encoder {
        EncoderKind::Vlad => Vocabulary::Codebook(load_codebook(&path)?),
        EncoderKind::Ifv => Vocabulary::Gmm(load_gmm(&path)?),
    })
}

pub fn cmd_encode(cfg: &RunConfig) -> CliResult<()> {
    let paths = OutPaths::new(&cfg.out);
    let ds = load_manifest_artifact(&paths)?;
    let desc_paths = descriptor_paths(&paths, &ds);
    let labels = ds.labels();
    let splits = splits_for(cfg, &ds)?;
    let flat = ds.flatten();

    for (si, split) in splits.iter().enumerate() {
        let vocab = load_vocabulary(cfg, &paths, si)?;
        for (part, indices) in [("train", &split.train), ("test", &split.test)] {
            let rows: Vec<Vec<f64>> = indices
                .par_iter()
                .map(|&i| {
                    let (ci, fi) = flat[i];
                    require("extract", &desc_paths[i])?;
                    let set = DescriptorSet::read(&desc_paths[i], ds.image_id(ci, fi))?;
                    let enc = match &vocab {
                        Vocabulary::Codebook(cb) => vlad_encode(cb, &set)?,
                        Vocabulary::Gmm(gmm) => fv_encode(gmm, &set, cfg.fv_scaling)?,
                    };
                    Ok(enc.values)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let dim = rows[0].len();
            let flat_values: Vec<f64> = rows.into_iter().flatten().collect();
            write_f32_matrix(&paths.encoded(si, part), dim, &flat_values)?;
            let part_labels: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            write_labels(&paths.labels(si, part), &part_labels)?;
            log_artifact("encode", &paths.encoded(si, part))?;
            log_artifact("encode", &paths.labels(si, part))?;
        }
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let paths = OutPaths::new(&cfg.out);
    let ds = load_manifest_artifact(&paths)?;
    let splits = splits_for(cfg, &ds)?;
    for si in 0..splits.len() {
        require("encode", &paths.encoded(si, "train"))?;
        let x = read_f32_matrix(&paths.encoded(si, "train"))?;
        let y = read_labels(&paths.labels(si, "train"))?;
        let seeds = split_seeds(&cfg.stage_seeds(), si);
        let lambda = cfg
            .lambda
            .unwrap_or_else(|| default_lambda(ds.classes.len(), y.len()));
        let epochs = cfg
            .svm_epochs
            .unwrap_or_else(|| epochs_for_iteration_budget(100 * y.len(), y.len()));
        let model = svm_train(
            &x,
            &y,
            &SvmConfig {
                lambda,
                max_epochs: epochs,
                seed: seeds.svm,
            },
        )
        .map_err(|e| Error::annotate(e, &format!("split {si}")))?;
        save_svm(&model, &paths.svm(si))?;
        println!(
            "[train] split {si}: {} classes x {} images, lambda {lambda:.3e}",
            ds.classes.len(),
            y.len()
        );
        log_artifact("train", &paths.svm(si))?;
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<()> {
    let paths = OutPaths::new(&cfg.out);
    let ds = load_manifest_artifact(&paths)?;
    let splits = splits_for(cfg, &ds)?;
    let mut accuracies = Vec::with_capacity(splits.len());
    for si in 0..splits.len() {
        require("train", &paths.svm(si))?;
        require("encode", &paths.encoded(si, "test"))?;
        let model = load_svm(&paths.svm(si))?;
        let x = read_f32_matrix(&paths.encoded(si, "test"))?;
        let y = read_labels(&paths.labels(si, "test"))?;
        accuracies.push(accuracy_percent(&model, &x, &y)?);
    }

    let mut echo = cfg.echo();
    echo.push(("classes".into(), ds.classes.len().to_string()));
    echo.push(("images".into(), ds.total_images().to_string()));
    let report = RunReport::from_accuracies(accuracies, echo);
    fs::write(paths.metrics_kv(), report.render_kv())
        .map_err(|e| Error::io(paths.metrics_kv(), e))?;
    fs::write(paths.metrics_txt(), report.render_text())
        .map_err(|e| Error::io(paths.metrics_txt(), e))?;
    print!("{}", report.render_text());
    log_artifact("evaluate", &paths.metrics_kv())?;
    log_artifact("evaluate", &paths.metrics_txt())?;
    Ok(())
}

pub fn cmd_pipeline(cfg: &RunConfig) -> CliResult<()> {
    cmd_pattern(cfg)?;
    cmd_extract(cfg, None)?;
    cmd_codebook(cfg)?;
    cmd_encode(cfg)?;
    cmd_train(cfg)?;
    cmd_evaluate(cfg)
}

/// Grid-runs the pipeline over one swept key, writing each run to
/// `out/sweep_<key>_<value>/` plus a summary file.
pub fn cmd_sweep(cfg: &RunConfig, key: &str, values: &[String]) -> CliResult<()> {
    ensure_out(cfg)?;
    let mut summary = String::new();
    let mut results = Vec::new();
    for value in values {
        let mut sub = cfg.clone();
        match key {
            // single-scale sweep: all pairs at one scale, total count kept
            "scale" | "s" => {
                let total = cfg.scales.len() * cfg.pairs_per_scale;
                let scale = value
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad scale `{value}`")))?;
                sub.scales = vec![scale];
                sub.pairs_per_scale = total;
            }
            "K" => sub.set("clusters", value)?,
            "L" => sub.set("patch_size", value)?,
            other => sub.set(other, value)?,
        }
        sub.out = cfg.out.join(format!("sweep_{key}_{}", value.replace(':', "-")));
        println!("[sweep] {key}={value} -> {}", sub.out.display());
        cmd_pipeline(&sub)?;
        let report = fs::read_to_string(OutPaths::new(&sub.out).metrics_kv())
            .map_err(|e| Error::io(sub.out.join("metrics.kv"), e))?;
        let mean = kv_value(&report, "accuracy_mean").unwrap_or_default();
        let std = kv_value(&report, "accuracy_std").unwrap_or_default();
        summary.push_str(&format!("{key}_{value}_mean={mean}\n{key}_{value}_std={std}\n"));
        results.push((value.clone(), mean, std));
    }
    let summary_path = cfg.out.join("sweep_summary.kv");
    fs::write(&summary_path, summary).map_err(|e| Error::io(&summary_path, e))?;
    println!("[sweep] {key} results:");
    for (value, mean, std) in results {
        println!("  {key}={value}: {mean} +/- {std}");
    }
    log_artifact("sweep", &summary_path)
}

fn kv_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}
