//! End-to-end tests of the `bigd` binary: stage wiring, determinism, exit
//! codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bigd::synth::{write_corpus, CorpusSpec};

fn bigd_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bigd"))
}

fn make_corpus(dir: &Path) {
    write_corpus(
        dir,
        &CorpusSpec {
            images_per_class: 6,
            width: 32,
            height: 32,
            seed: 3,
        },
    )
    .unwrap();
}

/// Fast settings shared by the tests.
fn fast_args(dataset: &Path, out: &Path, encoder: &str) -> Vec<String> {
    vec![
        "--dataset".into(),
        dataset.to_str().unwrap().into(),
        "--out".into(),
        out.to_str().unwrap().into(),
        "--set".into(),
        "step=8".into(),
        "--set".into(),
        "clusters=4".into(),
        "--set".into(),
        "repetitions=2".into(),
        "--set".into(),
        format!("encoder={encoder}"),
    ]
}

fn run_ok(args: &[String], subcommand: &str) -> Output {
    let output = bigd_bin().arg(subcommand).args(args).output().unwrap();
    assert!(
        output.status.success(),
        "`bigd {subcommand}` failed:\n{}\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn pipeline_writes_reports_and_stages_reproduce_it() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);

    let pipe_out = dir.path().join("pipeline");
    run_ok(&fast_args(&corpus, &pipe_out, "vlad"), "pipeline");
    assert!(pipe_out.join("metrics.kv").exists());
    assert!(pipe_out.join("metrics.txt").exists());
    assert!(pipe_out.join("pattern.txt").exists());
    assert!(pipe_out.join("model_s01.txt").exists());
    assert!(pipe_out.join("svm_s01.txt").exists());

    // the same artifacts stage by stage
    let staged_out = dir.path().join("staged");
    let args = fast_args(&corpus, &staged_out, "vlad");
    for stage in ["pattern", "extract", "codebook", "encode", "train", "evaluate"] {
        run_ok(&args, stage);
    }
    let staged_kv = std::fs::read(staged_out.join("metrics.kv")).unwrap();
    let pipe_kv = std::fs::read(pipe_out.join("metrics.kv")).unwrap();
    assert_eq!(staged_kv, pipe_kv, "staged metrics differ from pipeline metrics");

    // identical config and seeds give bit-identical metric files
    let again_out = dir.path().join("again");
    run_ok(&fast_args(&corpus, &again_out, "vlad"), "pipeline");
    let again_kv = std::fs::read(again_out.join("metrics.kv")).unwrap();
    assert_eq!(pipe_kv, again_kv, "re-run metrics differ");
}

#[test]
fn ifv_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    let out = dir.path().join("run");
    run_ok(&fast_args(&corpus, &out, "ifv"), "pipeline");
    let kv = std::fs::read_to_string(out.join("metrics.kv")).unwrap();
    assert!(kv.contains("encoder=ifv"));
    assert!(kv.contains("accuracy_mean="));
}

#[test]
fn missing_artifacts_name_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    let out = dir.path().join("run");

    // encode before anything: the manifest (extract output) is missing
    let output = bigd_bin()
        .arg("encode")
        .args(fast_args(&corpus, &out, "vlad"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("extract"), "stderr: {stderr}");

    // after pattern+extract, encode still lacks the codebook
    let args = fast_args(&corpus, &out, "vlad");
    run_ok(&args, "pattern");
    run_ok(&args, "extract");
    let output = bigd_bin().arg("encode").args(&args).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("codebook"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = bigd_bin()
        .arg("pattern")
        .arg("--out")
        .arg(dir.path().join("o"))
        .arg("--set")
        .arg("cluster_count=7")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("cluster_count"), "stderr: {stderr}");
}

#[test]
fn config_file_drives_the_run_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    let out = dir.path().join("run");
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "dataset={}\nout={}\nstep=8\nclusters=4\nrepetitions=1\nencoder=vlad\n",
            corpus.display(),
            out.display()
        ),
    )
    .unwrap();
    let output = bigd_bin()
        .arg("pipeline")
        .arg("--config")
        .arg(&conf)
        .arg("--set")
        .arg("repetitions=2")
        .output()
        .unwrap();
    assert!(output.status.success());
    let kv = std::fs::read_to_string(out.join("metrics.kv")).unwrap();
    assert!(kv.contains("repetitions=2"), "flag should override the file");
    assert!(kv.contains("split_01_accuracy="));
}

#[test]
fn sweep_produces_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    let out = dir.path().join("sweep");
    let mut args = fast_args(&corpus, &out, "vlad");
    args.push("--set".into());
    args.push("repetitions=1".into());
    args.push("--grid".into());
    args.push("K=4,6".into());
    run_ok(&args, "sweep");
    assert!(out.join("sweep_K_4").join("metrics.kv").exists());
    assert!(out.join("sweep_K_6").join("metrics.kv").exists());
    let summary = std::fs::read_to_string(out.join("sweep_summary.kv")).unwrap();
    assert!(summary.contains("K_4_mean="));
    assert!(summary.contains("K_6_mean="));
}

#[test]
fn extract_can_dump_channel_maps() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    let out = dir.path().join("run");
    let maps = dir.path().join("maps");
    let mut args = fast_args(&corpus, &out, "vlad");
    run_ok(&args, "pattern");
    args.push("--dump-channels".into());
    args.push(maps.to_str().unwrap().into());
    run_ok(&args, "extract");
    for name in ["intensity", "grad_x", "grad_y", "abs_grad_x", "abs_grad_y"] {
        let p = maps.join(format!("channel_{name}.pgm"));
        assert!(p.exists(), "missing {}", p.display());
        let img = bigd::imageio::load_grayscale(&p).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
    }
}

#[test]
fn groups_protocol_runs_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    make_corpus(&corpus);
    // tag 3 groups of 2 images in every class
    let mut tags = String::new();
    for class in ["grating_000", "grating_045", "grating_090", "noise"] {
        for i in 0..6 {
            tags.push_str(&format!("{class}/im_{i:03}.pgm g{}\n", i / 2));
        }
    }
    std::fs::write(corpus.join("groups.txt"), tags).unwrap();

    let out = dir.path().join("run");
    let mut args = fast_args(&corpus, &out, "vlad");
    args.push("--set".into());
    args.push("protocol=groups:2:1".into());
    args.push("--set".into());
    args.push("repetitions=3".into());
    run_ok(&args, "pipeline");
    let kv = std::fs::read_to_string(out.join("metrics.kv")).unwrap();
    assert!(kv.contains("protocol=groups:2:1"));
    assert!(kv.contains("split_02_accuracy="));
}
