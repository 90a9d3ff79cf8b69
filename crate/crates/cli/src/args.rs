//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "cmpagg",
    version,
    about = "Compare-aggregate sequence matching: train, evaluate, ablate, inspect"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model; writes a checkpoint and a JSON-Lines metrics log
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Train one model per comparison function on the same data and seed
    Ablate(AblateArgs),
    /// Export per-dimension max-activation positions of the CNN layer
    Inspect(InspectArgs),
    /// Generate a synthetic dataset file
    GenData(GenDataArgs),
}

/// Flags shared by every command. Each one overrides the matching key
/// of the `--config` JSON file.
#[derive(Args, Clone, Debug, Default)]
pub struct SharedArgs {
    /// JSON config file with a flat key set mirroring these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master random seed; all randomness flows from it
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for all output files
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Comparison function: nn, ntn, euccos, sub, mult, submult-nn
    #[arg(long)]
    pub comparison: Option<String>,
    /// Convolution window sizes as a comma list, e.g. 1,2,3
    #[arg(long)]
    pub windows: Option<String>,
    /// Hidden dimension l
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Embedding dropout rate in [0, 1)
    #[arg(long)]
    pub dropout: Option<f64>,
    /// ADAMAX learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Number of training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// classify-pair, select-from-k or select-from-k-with-plot
    #[arg(long)]
    pub task_shape: Option<String>,
    /// In-process synthetic dataset, e.g. containment:200:seed=7
    /// (tasks: containment, entailment-toy, plot; keys: seed, vocab)
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Dimension of seeded random embeddings (with --random-embeddings)
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Training dataset file (JSON Lines)
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Pretrained embedding file (`token v1 .. vd` per line)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Use seeded random frozen embeddings instead of a file
    #[arg(long)]
    pub random_embeddings: bool,
    /// Record training accuracy in the metrics log each epoch
    #[arg(long)]
    pub log_accuracy: bool,
    /// Skip malformed dataset lines with a warning instead of failing
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trained checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file (JSON Lines); alternative to --synthetic
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Training dataset file (JSON Lines)
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub random_embeddings: bool,
    /// Comparison functions to ablate, comma list (default: all six)
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trained checkpoint to inspect
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file (JSON Lines); alternative to --synthetic
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Example ids to report, comma list (default: every example)
    #[arg(long)]
    pub ids: Option<String>,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Output file (default: <out-dir>/<task>.jsonl)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
