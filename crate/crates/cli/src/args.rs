use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "svbop", version, about = "Bayes-optimal set-valued prediction")]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for training and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Output format for reports and predictions.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// File of `key=value` lines; keys are long flag names. Flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a flat or tree model and write a bundle.
    Train(TrainArgs),
    /// Build a label tree from training data.
    TreeBuild(TreeBuildArgs),
    /// Build a proximity graph over a flat model's weights.
    IndexBuild(IndexBuildArgs),
    /// Predict label sets for every example of a data file.
    Predict(PredictArgs),
    /// Evaluate methods and utilities on a test file.
    Eval(EvalArgs),
    /// Compare the inference loop against exhaustive search.
    OracleCheck(OracleArgs),
    /// Generate synthetic data.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Feature index of the first column in svmlight files (0 or 1).
    #[arg(long, default_value_t = 1)]
    pub index_base: usize,
}

#[derive(Debug, Clone, Args)]
pub struct HoldOutArgs {
    /// Fraction of the training file held out for conformal calibration.
    #[arg(long, default_value_t = 0.2)]
    pub calib_split: f64,

    /// Fraction of the training file held out for threshold tuning.
    #[arg(long, default_value_t = 0.2)]
    pub val_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TreeKind {
    #[value(name = "2means")]
    TwoMeans,
    Huffman,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// Maximum classes under one leaf-level node of a 2-means tree.
    #[arg(long, default_value_t = 2)]
    pub max_leaf: usize,

    /// Centroid movement at which 2-means stops.
    #[arg(long, default_value_t = 1e-4)]
    pub eps_c: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Inverse regularization strength.
    #[arg(long = "c", default_value_t = 1.0)]
    pub c: f64,

    /// Relative objective decrease at which training stops.
    #[arg(long, default_value_t = 1e-6)]
    pub eps_l: f64,

    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,

    /// Train without a bias term.
    #[arg(long)]
    pub no_bias: bool,

    /// Zero every weight with magnitude below this value.
    #[arg(long)]
    pub prune: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct IndexOpts {
    /// Maximum neighbors per node on upper layers.
    #[arg(long, default_value_t = 10)]
    pub m: usize,

    #[arg(long, default_value_t = 50)]
    pub ef_construction: usize,

    /// Choose edges in the norm-augmented space instead of by raw inner product.
    #[arg(long)]
    pub augmented: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training data in svmlight format.
    #[arg(long)]
    pub data: PathBuf,

    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub data_opts: DataArgs,

    #[command(flatten)]
    pub held_out: HoldOutArgs,

    #[command(flatten)]
    pub train: TrainOpts,

    /// Train a tree model over this hierarchy file.
    #[arg(long, conflicts_with = "tree_kind")]
    pub tree: Option<PathBuf>,

    /// Train a tree model over a tree built on the fly.
    #[arg(long, value_enum)]
    pub tree_kind: Option<TreeKind>,

    #[command(flatten)]
    pub tree_opts: TreeArgs,

    /// Also build a proximity graph (flat models only).
    #[arg(long)]
    pub index: bool,

    #[command(flatten)]
    pub index_opts: IndexOpts,
}

#[derive(Debug, Clone, Args)]
pub struct TreeBuildArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// Output hierarchy file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = TreeKind::TwoMeans)]
    pub kind: TreeKind,

    #[command(flatten)]
    pub data_opts: DataArgs,

    #[command(flatten)]
    pub tree_opts: TreeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IndexBuildArgs {
    /// Bundle directory; the index is added to it.
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub index_opts: IndexOpts,
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Utility as `kind[:param=value,...]`, e.g. `fbeta:beta=1`.
    #[arg(long, default_value = "f1")]
    pub utility: String,

    /// Method as `name[:param=value,...]`, e.g. `svbop_hsg:k0=10,ef=100`.
    #[arg(long, default_value = "svbop_full")]
    pub method: String,

    /// Training file the bundle was trained from; supplies the held-out
    /// examples for threshold tuning and conformal calibration.
    #[arg(long)]
    pub train: Option<PathBuf>,

    #[command(flatten)]
    pub held_out: HoldOutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub data: PathBuf,

    #[command(flatten)]
    pub data_opts: DataArgs,

    #[command(flatten)]
    pub method: MethodArgs,

    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Bundle to evaluate. Without it a flat model is trained from `--train`.
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Training file; held-out parts feed threshold tuning and calibration.
    #[arg(long)]
    pub train: Option<PathBuf>,

    #[arg(long)]
    pub test: PathBuf,

    /// Methods to run; repeatable.
    #[arg(long = "method", default_value = "svbop_full")]
    pub methods: Vec<String>,

    /// Utilities to score with; repeatable.
    #[arg(long = "utility", default_value = "f1")]
    pub utilities: Vec<String>,

    /// Add a conformal method, e.g. `--icp epsilon=0.1`.
    #[arg(long, value_name = "epsilon=E")]
    pub icp: Option<String>,

    /// Report zero timings so that reports are reproducible.
    #[arg(long)]
    pub no_timing: bool,

    /// Include per-example records (JSON only).
    #[arg(long)]
    pub records: bool,

    #[command(flatten)]
    pub data_opts: DataArgs,

    #[command(flatten)]
    pub held_out: HoldOutArgs,

    #[command(flatten)]
    pub train_opts: TrainOpts,

    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Distributions to check, one per line as whitespace-separated masses.
    /// Random Dirichlet draws are used when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,

    #[arg(long, default_value_t = 10)]
    pub classes: usize,

    #[arg(long, default_value_t = 1000)]
    pub draws: usize,

    /// Dirichlet concentration.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    /// Utilities to check; repeatable.
    #[arg(long = "utility", default_value = "f1")]
    pub utilities: Vec<String>,

    /// Absolute tolerance on expected utility.
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Gaussian class blobs, svmlight output.
    Blobs,
    /// Inputs labeled by a random softmax model, svmlight output.
    Teacher,
    /// Dirichlet distributions, one line of masses each.
    Dirichlet,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,

    #[arg(long, default_value_t = 10)]
    pub classes: usize,

    #[arg(long, default_value_t = 10)]
    pub dim: usize,

    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Spread of blob centers, or weight scale of the teacher.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,

    /// Dirichlet concentration.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,

    /// Seed for drawing examples; the class structure comes from `--seed`.
    /// Use the same `--seed` and different sample seeds for train and test
    /// files. Defaults to the seed plus one.
    #[arg(long)]
    pub sample_seed: Option<u64>,

    #[command(flatten)]
    pub data_opts: DataArgs,

    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
