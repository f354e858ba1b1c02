//! Run configuration: plain-text `key=value` files with flag overrides.
//!
//! Every default follows the reference parameter setting (15x15 patches,
//! step 2, four scales with four pairs each, 128 clusters, 500k-descriptor
//! vocabulary cap, ten repetitions).

use std::fmt;
use std::path::{Path, PathBuf};

use bigd::encoding::{EncoderKind, FvScaling};
use bigd::harness::{Protocol, ProtocolMode, ResizeSpec, StageSeeds};
use bigd::imageio::ResizeMethod;

/// Configuration or command-line usage problem; exits with code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

type UsageResult<T> = Result<T, UsageError>;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub patch_size: usize,
    pub step: usize,
    pub scales: Vec<usize>,
    pub pairs_per_scale: usize,
    pub clusters: usize,
    pub encoder: EncoderKind,
    pub fv_scaling: FvScaling,
    pub protocol: ProtocolMode,
    pub repetitions: usize,
    pub resize: Option<ResizeSpec>,
    /// `None` means "auto": 1 / (#classes x #train images) per split.
    pub lambda: Option<f64>,
    /// `None` means "auto": a budget of 100 passes.
    pub svm_epochs: Option<usize>,
    pub subsample: usize,
    pub kmeans_iters: usize,
    pub kmeans_tol: f64,
    pub gmm_iters: usize,
    pub gmm_tol: f64,
    pub variance_floor: f64,
    pub seed_pattern: u64,
    pub seed_split: u64,
    pub seed_codebook: u64,
    pub seed_svm: u64,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            out: PathBuf::from("bigd-out"),
            patch_size: 15,
            step: 2,
            scales: vec![1, 2, 3, 4],
            pairs_per_scale: 4,
            clusters: 128,
            encoder: EncoderKind::Ifv,
            fv_scaling: FvScaling::Improved,
            protocol: ProtocolMode::RandomHalf,
            repetitions: 10,
            resize: None,
            lambda: None,
            svm_epochs: None,
            subsample: 500_000,
            kmeans_iters: 100,
            kmeans_tol: 1e-6,
            gmm_iters: 100,
            gmm_tol: 1e-6,
            variance_floor: 1e-4,
            seed_pattern: 1,
            seed_split: 2,
            seed_codebook: 3,
            seed_svm: 4,
            jobs: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> UsageResult<T> {
    value
        .parse()
        .map_err(|_| UsageError(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_resize(value: &str) -> UsageResult<Option<ResizeSpec>> {
    if value == "none" {
        return Ok(None);
    }
    // WxH:method
    let (dims, method) = value
        .split_once(':')
        .ok_or_else(|| UsageError(format!("resize `{value}`: expected WxH:bilinear|bicubic")))?;
    let (w, h) = dims
        .split_once('x')
        .ok_or_else(|| UsageError(format!("resize `{value}`: expected WxH:bilinear|bicubic")))?;
    let method = match method {
        "bilinear" => ResizeMethod::Bilinear,
        "bicubic" => ResizeMethod::Bicubic,
        other => return Err(UsageError(format!("resize method `{other}` unknown"))),
    };
    Ok(Some(ResizeSpec {
        width: parse_num("resize", w)?,
        height: parse_num("resize", h)?,
        method,
    }))
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> UsageResult<()> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "patch_size" => self.patch_size = parse_num(key, value)?,
            "step" => self.step = parse_num(key, value)?,
            "scales" => {
                let scales: Result<Vec<usize>, _> =
                    value.split(',').map(|s| parse_num(key, s.trim())).collect();
                self.scales = scales?;
            }
            "pairs_per_scale" => self.pairs_per_scale = parse_num(key, value)?,
            "clusters" => self.clusters = parse_num(key, value)?,
            "encoder" => {
                self.encoder = value
                    .parse()
                    .map_err(|e| UsageError(format!("config key `encoder`: {e}")))?
            }
            "fv_scaling" => {
                self.fv_scaling = value
                    .parse()
                    .map_err(|e| UsageError(format!("config key `fv_scaling`: {e}")))?
            }
            "protocol" => {
                self.protocol = value
                    .parse()
                    .map_err(|e| UsageError(format!("config key `protocol`: {e}")))?
            }
            "repetitions" => self.repetitions = parse_num(key, value)?,
            "resize" => self.resize = parse_resize(value)?,
            "lambda" => {
                self.lambda = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "svm_epochs" => {
                self.svm_epochs = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "subsample" => self.subsample = parse_num(key, value)?,
            "kmeans_iters" => self.kmeans_iters = parse_num(key, value)?,
            "kmeans_tol" => self.kmeans_tol = parse_num(key, value)?,
            "gmm_iters" => self.gmm_iters = parse_num(key, value)?,
            "gmm_tol" => self.gmm_tol = parse_num(key, value)?,
            "variance_floor" => self.variance_floor = parse_num(key, value)?,
            "seed_pattern" => self.seed_pattern = parse_num(key, value)?,
            "seed_split" => self.seed_split = parse_num(key, value)?,
            "seed_codebook" => self.seed_codebook = parse_num(key, value)?,
            "seed_svm" => self.seed_svm = parse_num(key, value)?,
            "jobs" => self.jobs = parse_num(key, value)?,
            other => return Err(UsageError(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Reads a `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> UsageResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                UsageError(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn protocol_struct(&self) -> Protocol {
        Protocol {
            mode: self.protocol,
            repetitions: self.repetitions,
            seed: self.seed_split,
        }
    }

    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            split: self.seed_split,
            codebook: self.seed_codebook,
            svm: self.seed_svm,
        }
    }

    /// Full parameter record echoed into metric files, fixed key order.
    /// Output paths are excluded so identical configurations yield identical
    /// metric bytes wherever they run.
    pub fn echo(&self) -> Vec<(String, String)> {
        let scales = self
            .scales
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("encoder".into(), self.encoder.to_string()),
            ("patch_size".into(), self.patch_size.to_string()),
            ("step".into(), self.step.to_string()),
            ("scales".into(), scales),
            ("pairs_per_scale".into(), self.pairs_per_scale.to_string()),
            ("clusters".into(), self.clusters.to_string()),
            ("subsample_max".into(), self.subsample.to_string()),
            ("kmeans_max_iters".into(), self.kmeans_iters.to_string()),
            ("kmeans_tol".into(), self.kmeans_tol.to_string()),
            ("gmm_max_iters".into(), self.gmm_iters.to_string()),
            ("gmm_tol".into(), self.gmm_tol.to_string()),
            ("variance_floor_scale".into(), self.variance_floor.to_string()),
            ("fv_scaling".into(), self.fv_scaling.to_string()),
            (
                "lambda".into(),
                self.lambda.map_or("auto".into(), |l| l.to_string()),
            ),
            (
                "svm_epochs".into(),
                self.svm_epochs.map_or("auto".into(), |e| e.to_string()),
            ),
            ("protocol".into(), self.protocol.to_string()),
            ("repetitions".into(), self.repetitions.to_string()),
            (
                "resize".into(),
                self.resize.map_or("none".into(), |r| {
                    let m = match r.method {
                        ResizeMethod::Bilinear => "bilinear",
                        ResizeMethod::Bicubic => "bicubic",
                    };
                    format!("{}x{}:{m}", r.width, r.height)
                }),
            ),
            ("seed_pattern".into(), self.seed_pattern.to_string()),
            ("seed_split".into(), self.seed_split.to_string()),
            ("seed_codebook".into(), self.seed_codebook.to_string()),
            ("seed_svm".into(), self.seed_svm.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setting() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.patch_size, 15);
        assert_eq!(cfg.step, 2);
        assert_eq!(cfg.scales, vec![1, 2, 3, 4]);
        assert_eq!(cfg.pairs_per_scale, 4);
        assert_eq!(cfg.clusters, 128);
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.subsample, 500_000);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("clusterz", "12").unwrap_err();
        assert!(err.0.contains("clusterz"));
    }

    #[test]
    fn file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# demo\nclusters=32\nencoder=vlad\nprotocol=ratio:16:48\nresize=200x200:bilinear\n",
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.clusters, 32);
        assert_eq!(cfg.encoder, EncoderKind::Vlad);
        assert_eq!(
            cfg.protocol,
            ProtocolMode::RandomRatio { train: 16, test: 48 }
        );
        assert_eq!(
            cfg.resize,
            Some(ResizeSpec {
                width: 200,
                height: 200,
                method: ResizeMethod::Bilinear
            })
        );
        cfg.set("clusters", "64").unwrap();
        assert_eq!(cfg.clusters, 64);

        std::fs::write(&path, "clusters\n").unwrap();
        assert!(cfg.apply_file(&path).is_err());
    }
}
