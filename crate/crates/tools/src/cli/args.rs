use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use manifold_core::generation::GenerationMode;
use manifold_core::Activation;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "manifold", version, about = "Manifold-based coverage, test generation and monitoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a VAE (one or two stages) on an IDX dataset.
    TrainVae(TrainVaeArgs),
    /// Train a dense softmax classifier to serve as the model under test.
    TrainClassifier(TrainClassifierArgs),
    /// Measure coverage of a test set.
    Coverage(CoverageArgs),
    /// Cramér's V between covered obligations and labels of a report.
    Assoc(AssocArgs),
    /// Generate fault-revealing tests with a two-stage conditional VAE.
    Generate(GenerateArgs),
    /// Score inputs with the latent-density monitor.
    Monitor(MonitorArgs),
    /// Fréchet distance between two datasets.
    Frechet(FrechetArgs),
    /// Record per-neuron activation ranges for boundary coverage.
    Profile(ProfileArgs),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(_) => Err("must be positive and finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// An input dataset: IDX images, a tensor file, or a suite directory.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// IDX labels for `--data`; suite directories carry their own.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Use only the first N rows.
    #[arg(long, value_parser = positive)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainVaeArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    pub limit: Option<usize>,
    #[arg(long, value_parser = positive, default_value_t = 8)]
    pub latent: usize,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), default_value_t = 1)]
    pub stages: u8,
    #[arg(long)]
    pub conditional: bool,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "512")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = Activation::Relu)]
    pub activation: Activation,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, value_parser = positive, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, value_parser = positive_f64, default_value_t = 1e-3)]
    pub lr: f64,
    /// Second-stage latent width; defaults to `--latent`.
    #[arg(long, value_parser = positive)]
    pub stage2_latent: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "256,256")]
    pub stage2_hidden: Vec<usize>,
    /// Fixed variance of the second stage's Gaussian likelihood.
    #[arg(long, value_parser = positive_f64, default_value_t = 0.5)]
    pub stage2_variance: f64,
    /// Defaults to `--epochs`.
    #[arg(long)]
    pub stage2_epochs: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_parser = positive)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "256,128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = Activation::Tanh)]
    pub activation: Activation,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, value_parser = positive, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, value_parser = positive_f64, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionArg {
    Mcc,
    Tway,
    Nc,
    Nbc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long, value_enum)]
    pub criterion: CriterionArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// VAE model directory (mcc, tway).
    #[arg(long)]
    pub vae: Option<PathBuf>,
    /// Sections per latent dimension (mcc, tway).
    #[arg(long)]
    pub k: Option<usize>,
    /// Interaction strength (tway).
    #[arg(long)]
    pub t: Option<usize>,
    /// Classifier model directory (nc, nbc).
    #[arg(long = "mut")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub nc_threshold: Option<f64>,
    /// Activation profile JSON (nbc).
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Keep only inputs with this label.
    #[arg(long)]
    pub class_filter: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AssocArgs {
    #[arg(long)]
    pub events: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Random,
    Search,
}

impl From<ModeArg> for GenerationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Random => GenerationMode::Random,
            ModeArg::Search => GenerationMode::Search,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Two-stage conditional VAE directory.
    #[arg(long)]
    pub vae: PathBuf,
    #[arg(long = "mut")]
    pub model: PathBuf,
    #[arg(long, value_parser = positive)]
    pub n: usize,
    #[arg(long, value_parser = positive_f64, default_value_t = 3.0)]
    pub dedup: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Random)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    pub w_fault: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_real: f64,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, value_parser = positive_f64, default_value_t = 0.25)]
    pub step_scale: f64,
    /// Defaults to 1000 · n.
    #[arg(long)]
    pub max_attempts: Option<u64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_parser = positive, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MonitorArgs {
    #[arg(long)]
    pub vae: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = manifold_core::monitor::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FrechetArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_parser = positive)]
    pub limit: Option<usize>,
    /// Use this classifier's last hidden layer as the feature space.
    #[arg(long = "mut")]
    pub model: Option<PathBuf>,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProfileArgs {
    #[arg(long = "mut")]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}
