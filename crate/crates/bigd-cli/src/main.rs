//! Batch front end for BIGD texture-classification experiments.
//!
//! Stages: `pattern` -> `extract` -> `codebook` -> `encode` -> `train` ->
//! `evaluate`; `pipeline` runs them all, `sweep` grid-runs the pipeline.
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod stages;

use config::{RunConfig, UsageError};

/// Stage or configuration failure with its exit classification.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(bigd::Error),
}

impl From<bigd::Error> for CliError {
    fn from(e: bigd::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(bigd::Error::Numeric(_)) => 3,
            CliError::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bigd",
    about = "Block intensity and gradient difference texture classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Plain-text key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single configuration key (repeatable), e.g. --set K=32.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Dataset root (directory per class); overrides the config file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory for artifacts; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also dump the first image's five channel maps as PGMs into this
    /// directory.
    #[arg(long, value_name = "DIR")]
    dump_channels: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept axis, e.g. --grid K=16,32,64,96,128 or --grid
    /// protocol=ratio:16:48,ratio:32:32,ratio:48:16.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    grid: String,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the random block-pair layout shared by the whole run.
    Pattern(CommonArgs),
    /// Scan the dataset and extract dense descriptors per image.
    Extract(ExtractArgs),
    /// Fit the per-split visual vocabulary (k-means or GMM) on training
    /// descriptors.
    Codebook(CommonArgs),
    /// Encode every split's train and test images (VLAD or IFV).
    Encode(CommonArgs),
    /// Train the per-split one-vs-rest linear SVMs.
    Train(CommonArgs),
    /// Score the test sets and write the metric files.
    Evaluate(CommonArgs),
    /// All stages in sequence.
    Pipeline(CommonArgs),
    /// Grid-run the pipeline over one configuration axis.
    Sweep(SweepArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Pattern(c)
            | Command::Codebook(c)
            | Command::Encode(c)
            | Command::Train(c)
            | Command::Evaluate(c)
            | Command::Pipeline(c) => c,
            Command::Extract(e) => &e.common,
            Command::Sweep(s) => &s.common,
        }
    }
}

fn build_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for pair in &common.sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set `{pair}`: expected KEY=VALUE")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(dataset) = &common.dataset {
        cfg.dataset = Some(dataset.clone());
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(cli.command.common())?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {} jobs: {e}", cfg.jobs)))?;
    }
    match &cli.command {
        Command::Pattern(_) => stages::cmd_pattern(&cfg),
        Command::Extract(args) => stages::cmd_extract(&cfg, args.dump_channels.as_deref()),
        Command::Codebook(_) => stages::cmd_codebook(&cfg),
        Command::Encode(_) => stages::cmd_encode(&cfg),
        Command::Train(_) => stages::cmd_train(&cfg),
        Command::Evaluate(_) => stages::cmd_evaluate(&cfg),
        Command::Pipeline(_) => stages::cmd_pipeline(&cfg),
        Command::Sweep(args) => {
            let (key, values) = args
                .grid
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--grid `{}`: expected KEY=V1,V2", args.grid)))?;
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
            if values.is_empty() || values.iter().any(String::is_empty) {
                return Err(CliError::Usage(format!("--grid `{}`: empty value", args.grid)));
            }
            stages::cmd_sweep(&cfg, key.trim(), &values)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's rendered help/error but normalize the exit code
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
