use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "orderprobe",
    version,
    about = "Exact masked-token references for PCFG languages, with and without word order"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a grammar and check its invariants.
    Validate(ValidateArgs),
    /// List the most probable sentences until the coverage threshold is passed.
    Enumerate(EnumerateArgs),
    /// Sample train/validation/test corpora.
    Sample(SampleArgs),
    /// Write ordered and order-erased reference tables.
    Oracle(OracleArgs),
    /// Report entropies and the task divergence per mask count.
    Sweep(SweepArgs),
    /// Write evaluation manifests and gold tokens.
    ExportEval(ExportArgs),
    /// Score model predictions against a pipeline run.
    Score(ScoreArgs),
    /// Run every stage and write a content-hashed run manifest.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub grammar: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CoverageArgs {
    /// Stop once the covered probability mass exceeds this value.
    #[arg(long, default_value_t = 0.75)]
    pub threshold: f64,
    /// Longest sentence considered, in tokens.
    #[arg(long, default_value_t = orderprobe::DEFAULT_MAX_LENGTH)]
    pub max_length: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    /// Mask counts, comma separated and ascending.
    #[arg(long = "k", value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoringArgs {
    /// Sum divergence terms without instance weights.
    #[arg(long)]
    pub unweighted: bool,
    /// Lower bound applied to model probabilities before taking logs.
    #[arg(long, default_value_t = orderprobe::DEFAULT_FLOOR)]
    pub floor: f64,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    pub grammar: PathBuf,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    /// Take the N most probable sentences instead of a coverage threshold.
    #[arg(long, value_name = "N")]
    pub kbest: Option<usize>,
    /// Write the table here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 100_000)]
    pub train: usize,
    #[arg(long, default_value_t = 10_000)]
    pub validation: usize,
    #[arg(long, default_value_t = 10_000)]
    pub test: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub grammar: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = orderprobe::DEFAULT_MAX_LENGTH)]
    pub max_length: usize,
    /// Also run a chi-square test of the training split against the
    /// enumerated probabilities at this threshold.
    #[arg(long, value_name = "THRESHOLD")]
    pub chi2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub grammar: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    #[command(flatten)]
    pub masks: MaskArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub grammar: PathBuf,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    #[command(flatten)]
    pub masks: MaskArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Write the CSV here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub grammar: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    #[command(flatten)]
    pub masks: MaskArgs,
    /// Also write predictions files for ideal ordered and order-blind models.
    #[arg(long)]
    pub reference_predictions: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Output directory of a pipeline run.
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "model")]
    pub model_name: String,
    /// Mask counts to score; defaults to every count in the run.
    #[arg(long = "k", value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, default_value_t = orderprobe::DEFAULT_FLOOR)]
    pub floor: f64,
    /// Write the metrics CSV here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub grammar: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    #[command(flatten)]
    pub masks: MaskArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training sentences to sample; no corpus is written when all sizes are zero.
    #[arg(long, default_value_t = 0)]
    pub train: usize,
    #[arg(long, default_value_t = 0)]
    pub validation: usize,
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    /// Also write predictions files for ideal ordered and order-blind models.
    #[arg(long)]
    pub reference_predictions: bool,
}
