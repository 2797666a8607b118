use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cmms::solver::{Hyperparams, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "cmms", version, about = "Class-centroid matching domain adaptation")]
#[command(arg_required_else_help = true, subcommand_required = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unsupervised adaptation: labeled source, unlabeled target.
    Uda(RunArgs),
    /// Semi-supervised adaptation in a shared feature space.
    SdaHomo(RunArgs),
    /// Semi-supervised adaptation across different feature spaces.
    SdaHetero(RunArgs),
    /// Run every model variant on one unsupervised task.
    Ablate(RunArgs),
    /// Run the invariant suite on synthetic data.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Flags shared by the run subcommands. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub source_labels: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub target_labels: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Projected dimension d.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Neighbourhood size of the target graph.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Reduce features to this many principal components after z-scoring.
    #[arg(long)]
    pub pca: Option<usize>,
    #[arg(long)]
    pub no_zscore: bool,
    /// Labeled target samples per class (semi-supervised modes).
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings as read from a config file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub source: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub target_labels: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub dim: Option<usize>,
    pub k: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub variant: Option<Variant>,
    pub pca: Option<usize>,
    pub zscore: Option<bool>,
    pub per_class: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Uda,
    SdaHomo,
    SdaHetero,
    Ablate,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Uda => "uda",
            Mode::SdaHomo => "sda-homo",
            Mode::SdaHetero => "sda-hetero",
            Mode::Ablate => "ablate",
        }
    }

    pub fn semi_supervised(&self) -> bool {
        matches!(self, Mode::SdaHomo | Mode::SdaHetero)
    }
}

/// Fully resolved run settings; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub source: PathBuf,
    pub source_labels: PathBuf,
    pub target: PathBuf,
    pub target_labels: Option<PathBuf>,
    pub hyper: Hyperparams,
    pub zscore: bool,
    pub pca: Option<usize>,
    pub per_class: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub const DEFAULT_PER_CLASS: usize = 3;

fn required(value: Option<PathBuf>, flag: &str, mode: Mode) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{} requires --{flag}", mode.as_str())))
}

/// Merge flags over the optional config file over defaults, then validate.
pub fn parse_config(mode: Mode, args: &RunArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    resolve(mode, args, file)
}

pub fn resolve(mode: Mode, args: &RunArgs, file: FileConfig) -> Result<RunConfig, CliError> {
    let d = Hyperparams::default();
    let hyper = Hyperparams {
        alpha: args.alpha.or(file.alpha).unwrap_or(d.alpha),
        beta: args.beta.or(file.beta).unwrap_or(d.beta),
        gamma: args.gamma.or(file.gamma).unwrap_or(d.gamma),
        dim: args.dim.or(file.dim).unwrap_or(d.dim),
        k: args.k.or(file.k).unwrap_or(d.k),
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
        tol: file.tol.unwrap_or(d.tol),
        variant: args.variant.or(file.variant).unwrap_or(d.variant),
    };
    hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let target_labels = args.target_labels.clone().or(file.target_labels);
    if (mode.semi_supervised() || mode == Mode::Ablate) && target_labels.is_none() {
        return Err(CliError::Config(format!("{} requires --target-labels", mode.as_str())));
    }
    if mode == Mode::Ablate && args.variant.is_some() {
        return Err(CliError::Config("ablate runs every variant; --variant conflicts with it".into()));
    }
    let per_class = args.per_class.or(file.per_class).unwrap_or(DEFAULT_PER_CLASS);
    if mode.semi_supervised() && per_class == 0 {
        return Err(CliError::Config("--per-class must be at least 1".into()));
    }
    let pca = args.pca.or(file.pca);
    if pca == Some(0) {
        return Err(CliError::Config("--pca must be at least 1".into()));
    }
    Ok(RunConfig {
        mode,
        source: required(args.source.clone().or(file.source), "source", mode)?,
        source_labels: required(args.source_labels.clone().or(file.source_labels), "source-labels", mode)?,
        target: required(args.target.clone().or(file.target), "target", mode)?,
        target_labels,
        hyper,
        zscore: if args.no_zscore { false } else { file.zscore.unwrap_or(true) },
        pca,
        per_class,
        seed: args.seed.or(file.seed).unwrap_or(0),
        out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("cmms-out")),
    })
}
