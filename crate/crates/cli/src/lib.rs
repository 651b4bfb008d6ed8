//! Command-line front end for the `hrge` library.
//!
//! Every command accepts `--config FILE` (flat `key = value`, keys are the
//! long flag names); explicit flags override the file, which overrides the
//! built-in defaults.

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

/// Exit code for invalid invocations and configurations.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for unreadable or inconsistent input data.
pub const EXIT_DATA: i32 = 3;
/// Exit code for numeric failures (diverging loss, failed gradient check).
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] hrge::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use hrge::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Core(e) => match e {
                E::Config(_) | E::RingTooSmall { .. } | E::Coarsen { .. } => EXIT_USAGE,
                E::NonFinite { .. } | E::StaleCache => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

/// Distance cutoff for retrieval: a positive number, `inf`, or `auto`
/// (swept on a validation set).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    Auto,
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number, inf or auto, got {s:?}"))?;
        if v.is_nan() || v <= 0.0 {
            return Err(format!("threshold must be > 0, got {s}"));
        }
        Ok(Threshold::Value(v))
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Value(v) => write!(f, "{v}"),
            Threshold::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hrge", version, about = "Relational graph embedding of multi-view features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature dataset (HRGF file).
    Synth(SynthArgs),
    /// Train an embedding model and classifier.
    Train(TrainArgs),
    /// Report per-instance and per-class accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Build a descriptor index and evaluate retrieval.
    Retrieve(RetrieveArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output HRGF file.
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key = value file with defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// prototype | relational-order
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Standard deviation of per-sample noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Sub-classes per class (prototype mode); 0 for none.
    #[arg(long)]
    pub fine_per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Check the view count against this coarsening stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Check the view count against this hierarchy depth.
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (HRGF).
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory; receives model.ckpt, train_log.txt and manifest.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Optional held-out dataset evaluated after training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// baseline, pr, nr, hrge-1l, hrge, hrge-won, hrge-mp, hrge-ap, hrge-id
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Hierarchy depth; defaults to the deepest valid one.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Hidden width of the pairwise relation network; defaults to the feature width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Coarsening phase (0 keeps nodes s, 2s, ...).
    #[arg(long)]
    pub offset: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub decay_period: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on fine (sub-category) labels instead of coarse ones.
    #[arg(long)]
    pub fine: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for accuracy.txt and manifest.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score against fine labels.
    #[arg(long)]
    pub fine: bool,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Coarse-label checkpoint used for descriptors.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus; every shape is used as a query against the others.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for index.hrgi, metrics.tsv, metrics.txt, ranked.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Distance cutoff: a number, inf, or auto.
    #[arg(long)]
    pub threshold: Option<Threshold>,
    /// Dataset for the auto threshold sweep.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Fine-label checkpoint; enables sub-category re-ranking.
    #[arg(long)]
    pub fine_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Number of random shapes in the checked batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Perturb the analytic gradients; the check must then fail.
    #[arg(long)]
    pub corrupt: bool,
}
