use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "svkit",
    version,
    about = "Speaker verification toolkit",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalOpts {
    /// Flat key = value configuration file; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["plda", "cosine"])]
    pub backend: Option<String>,
    /// Number of top cohort scores used by S-norm
    #[arg(long = "snorm-x", global = true, value_name = "N")]
    pub snorm_x: Option<usize>,
    #[arg(long = "dcf-ptarget", global = true, value_name = "P")]
    pub dcf_ptarget: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract FBank or PLP features from a wav list
    #[command(arg_required_else_help = true)]
    Feats(FeatsArgs),
    /// Energy-based voice activity detection
    #[command(arg_required_else_help = true)]
    Vad(VadArgs),
    /// Compute embeddings with a TDNN or ResNet extractor
    #[command(arg_required_else_help = true)]
    Embed(EmbedArgs),
    /// Train a scoring backend (centering, LDA, PLDA or cosine)
    #[command(name = "train-plda", arg_required_else_help = true)]
    TrainPlda(TrainArgs),
    /// Score a trial list
    #[command(arg_required_else_help = true)]
    Score(ScoreArgs),
    /// Adaptive S-norm of an existing score file
    #[command(arg_required_else_help = true)]
    Snorm(SnormArgs),
    /// Logistic-regression calibration and fusion
    #[command(arg_required_else_help = true)]
    Calibrate(CalibrateArgs),
    /// Weighted-average or model-based fusion of score files
    #[command(arg_required_else_help = true)]
    Fuse(FuseArgs),
    /// EER and minDCF of a score file against a keyed trial list
    #[command(arg_required_else_help = true)]
    Eval(EvalArgs),
    /// Generate a synthetic corpus or synthetic embeddings
    #[command(arg_required_else_help = true)]
    Synth(SynthArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    Fbank,
    Plp,
}

#[derive(Args, Debug)]
pub struct FeatsArgs {
    /// `utt path` wav list
    #[arg(long, value_name = "FILE")]
    pub scp: PathBuf,
    /// Output directory for feature files and feats.scp
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<FeatureChoice>,
    /// Precomputed VAD masks; otherwise energy VAD runs when enabled in the config
    #[arg(long, value_name = "FILE")]
    pub vad: Option<PathBuf>,
    #[arg(long)]
    pub no_vad: bool,
    #[arg(long)]
    pub no_stmn: bool,
}

#[derive(Args, Debug)]
pub struct VadArgs {
    #[arg(long, value_name = "FILE")]
    pub scp: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// feats.scp written by `feats`
    #[arg(long, value_name = "FILE")]
    pub feats: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// tdnn-standard, tdnn-big, tdnn-big-residual or resnet34
    #[arg(long)]
    pub arch: Option<String>,
    /// Extractor weights; random initialization from the seed when absent
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Store the weights actually used
    #[arg(long, value_name = "FILE")]
    pub save_weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub utt2spk: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also store the speaker-averaged S-norm cohort
    #[arg(long, value_name = "FILE")]
    pub cohort_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BackendSource {
    /// Trained backend; when absent a backend is trained on the fly
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Training embeddings (defaults to the scored embeddings)
    #[arg(long, value_name = "FILE")]
    pub train_embeddings: Option<PathBuf>,
    /// Speaker labels of the training embeddings
    #[arg(long, value_name = "FILE")]
    pub utt2spk: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CohortSource {
    /// Stored cohort from `train-plda --cohort-out`
    #[arg(long, value_name = "FILE")]
    pub cohort: Option<PathBuf>,
    /// Cohort embeddings (defaults to the training embeddings)
    #[arg(long, value_name = "FILE")]
    pub cohort_embeddings: Option<PathBuf>,
    /// Speaker labels of the cohort embeddings (defaults to --utt2spk)
    #[arg(long, value_name = "FILE")]
    pub cohort_utt2spk: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, value_name = "FILE")]
    pub embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub trials: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendSource,
    #[command(flatten)]
    pub cohort: CohortSource,
}

#[derive(Args, Debug)]
pub struct SnormArgs {
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub embeddings: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub trials: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendSource,
    #[command(flatten)]
    pub cohort: CohortSource,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// One score file per system, all over the same trials
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keyed trial list for training
    #[arg(long, value_name = "FILE")]
    pub key: Option<PathBuf>,
    /// Where to write the final affine model
    #[arg(long, value_name = "FILE")]
    pub model_out: Option<PathBuf>,
    /// Apply a stored model instead of training
    #[arg(long, value_name = "FILE", conflicts_with_all = ["key", "model_out"])]
    pub apply: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Comma-separated weights (defaults to the configured fusion weights)
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Apply a trained fusion model instead of a weighted average
    #[arg(long, value_name = "FILE", conflicts_with = "weights")]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub key: PathBuf,
    /// Also write the metrics line to this file
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Corpus,
    Embeddings,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "corpus")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 4)]
    pub speakers: usize,
    #[arg(long, default_value_t = 5)]
    pub utts: usize,
    /// Utterance duration in seconds (corpus)
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// Embedding dimension (embeddings)
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Target trials; defaults to all same-speaker pairs up to 1000
    #[arg(long)]
    pub targets: Option<usize>,
    /// Nontarget trials; defaults to all cross-speaker pairs up to 1000
    #[arg(long)]
    pub nontargets: Option<usize>,
}
