//! Command-line driver. Every command writes into an output directory and
//! leaves a `manifest.txt` there from which `replay` reruns it.

mod commands;
mod manifest;

use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::attention::EncoderError;
use crate::augment::AugError;
use crate::autodiff::CheckpointError;
use crate::config::{parse_override, parse_text, ConfigError, RunConfig};
use crate::graph::GraphError;
use crate::metrics::MetricError;
use crate::train::TrainError;

pub use manifest::{Job, JobKind, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "hgmda", version, about = "Semi-supervised node classification on heterogeneous graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes checkpoint.hgmc and metrics.tsv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (sets data.dir); synthetic data when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score trained runs on their test split; writes eval.tsv.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory produced by `train`; repeatable.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Dataset directory overriding the one recorded in each run.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Plan one augmentation and write the overlay with a report.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Strategy,
        /// Augmentation ratio in (0, 1] (sets train.k_ratio).
        #[arg(long)]
        k: Option<f64>,
        /// Trained run supplying attention; a freshly seeded encoder otherwise.
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Triangle statistics before and after an optional edge overlay.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Final-layer node states and attention of a trained run.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rerun the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    FeatureExchange,
    EdgeAdd,
    EdgeRemove,
    /// Edge adding and removing together.
    Triangle,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FeatureExchange => "feature-exchange",
            Strategy::EdgeAdd => "edge-add",
            Strategy::EdgeRemove => "edge-remove",
            Strategy::Triangle => "triangle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Strategy::value_variants().iter().copied().find(|v| v.name() == s)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Ratios(_) | GraphError::Infeasible { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Config(_) => CliError::Config(e.to_string()),
            EncoderError::Param(_) | EncoderError::Schema(_) => CliError::Data(e.to_string()),
            EncoderError::Tensor(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::Graph(g) => g.into(),
            TrainError::Encoder(enc) => enc.into(),
            TrainError::Augment(a) => a.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AugError> for CliError {
    fn from(e: AugError) -> Self {
        match e {
            AugError::Ratio(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Defaults, then the config file, then `--set` overrides, then `--seed`.
fn resolve(common: &Common, extra: &[(String, String)]) -> Result<(RunConfig, Vec<String>), CliError> {
    let mut cfg = RunConfig::default();
    let mut sources = Vec::new();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let pairs = parse_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply(&pairs)?;
        sources.push(format!("config file {}", path.display()));
    }
    for s in &common.set {
        let (k, v) = parse_override(s).map_err(|_| CliError::Config(format!("override {s:?} is not KEY=VALUE")))?;
        cfg.set(&k, &v)?;
        sources.push(format!("override {k}={v}"));
    }
    for (k, v) in extra {
        cfg.set(k, v)?;
        sources.push(format!("flag {k}={v}"));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        sources.push(format!("flag seed={seed}"));
    }
    Ok((cfg, sources))
}

fn path_arg(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn job_from(command: Command) -> Result<(Job, PathBuf, bool), CliError> {
    let data_flag = |d: &Option<PathBuf>| d.iter().map(|p| ("data.dir".to_string(), path_arg(p))).collect::<Vec<_>>();
    let (kind, common, extra, args) = match command {
        Command::Generate { common } => (JobKind::Generate, common, vec![], vec![]),
        Command::Train { common, data } => (JobKind::Train, common, data_flag(&data), vec![]),
        Command::Eval { common, runs, data } => {
            let mut args: Vec<(String, String)> = runs.iter().map(|r| ("run".to_string(), path_arg(r))).collect();
            args.extend(data.iter().map(|d| ("data".to_string(), path_arg(d))));
            (JobKind::Eval, common, vec![], args)
        }
        Command::Augment {
            common,
            data,
            strategy,
            k,
            run,
        } => {
            let mut extra = data_flag(&data);
            extra.extend(k.map(|k| ("train.k_ratio".to_string(), k.to_string())));
            let mut args = vec![("strategy".to_string(), strategy.name().to_string())];
            args.extend(run.iter().map(|r| ("run".to_string(), path_arg(r))));
            (JobKind::Augment, common, extra, args)
        }
        Command::Analyze { common, data, overlay } => {
            let args = overlay.iter().map(|o| ("overlay".to_string(), path_arg(o))).collect();
            (JobKind::Analyze, common, data_flag(&data), args)
        }
        Command::ExportEmbeddings { common, run, data } => {
            let mut args = vec![("run".to_string(), path_arg(&run))];
            args.extend(data.iter().map(|d| ("data".to_string(), path_arg(d))));
            (JobKind::ExportEmbeddings, common, vec![], args)
        }
        Command::Replay { manifest, out, force } => {
            let job = Job::read(&manifest)?;
            return Ok((job, out, force));
        }
    };
    let (config, sources) = resolve(&common, &extra)?;
    Ok((
        Job {
            kind,
            args,
            config,
            sources,
        },
        common.out,
        common.force,
    ))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("HGMDA_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("HGMDA_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (job, out, force) = job_from(cli.command)?;
    commands::execute(&job, &out, force)
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hgmda: {e}");
            e.exit_code()
        }
    }
}
