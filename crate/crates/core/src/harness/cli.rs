use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "seranet", version, about = "Brain tissue segmentation from under-sampled k-space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic under-sampled k-space dataset.
    GenData(GenDataArgs),
    /// Train one model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train and evaluate models over a range of reconstruction block counts.
    SweepBlocks(SweepArgs),
    /// Tabulate completed runs.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Noise level as a fraction of the k-space RMS magnitude.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
    /// TOML configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of training brains.
    #[arg(long)]
    pub brains: Option<usize>,
    /// Number of held-out test brains.
    #[arg(long)]
    pub test_brains: Option<usize>,
    /// Slices per brain.
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Fraction of phase-encoding lines kept.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Fully sampled central lines.
    #[arg(long)]
    pub center_lines: Option<usize>,
    /// TOML table of tissue relaxation parameters.
    #[arg(long)]
    pub tissue_table: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttentionInputArg {
    FixedNMinus1,
    PreviousX,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    /// seranet, one_step (onestep), two_step (twostep) or joint.
    #[arg(long)]
    pub model: Option<String>,
    /// Regularization block type: A (cascade) or B (encoder/decoder).
    #[arg(long)]
    pub reg_type: Option<String>,
    /// Number of reconstruction blocks.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Number of attention recurrences.
    #[arg(long = "T", visible_alias = "recurrences")]
    pub recurrences: Option<usize>,
    #[arg(long)]
    pub reg_channels: Option<usize>,
    #[arg(long)]
    pub unet_channels: Option<usize>,
    #[arg(long)]
    pub lstm_channels: Option<usize>,
    #[arg(long)]
    pub unet_depth: Option<usize>,
    #[arg(long, value_enum)]
    pub attention_input: Option<AttentionInputArg>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OptimArgs {
    /// ce (final map), ce_sum or ce_l2.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs between learning-rate halvings.
    #[arg(long)]
    pub decay_every: Option<usize>,
    /// Weight of the l2 term of the ce_l2 loss.
    #[arg(long)]
    pub l2_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint file or a run directory containing `checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Write magnitude and overlay PNGs for the first N records.
    #[arg(long, default_value_t = 0)]
    pub dump_images: usize,
    /// Expected model settings; any difference from the checkpoint is an error.
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Largest number of reconstruction blocks.
    #[arg(long, default_value_t = 3)]
    pub n_max: usize,
    /// Comma-separated model kinds.
    #[arg(long, default_value = "two_step,joint,seranet")]
    pub models: String,
    /// Comma-separated regularization block types.
    #[arg(long, default_value = "A,B")]
    pub reg_types: String,
    /// Comma-separated training seeds; every row is trained once per seed.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CompareMode {
    /// One row per method.
    Methods,
    /// One row per SERANet loss variant.
    Losses,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Run directories (or directories containing run directories).
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "methods")]
    pub mode: CompareMode,
}
