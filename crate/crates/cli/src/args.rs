use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fewl::providers::ProviderMode;

#[derive(Debug, Parser)]
#[command(name = "fewl", version, about = "Score answers for hallucination against reference models, without gold answers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Response cache directory; overrides `run.cache_dir`.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads and in-flight provider calls; overrides `run.max_concurrency`.
    #[arg(long, global = true)]
    pub max_concurrency: Option<usize>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Forces every provider and the embedder into one mode.
    #[arg(long, global = true)]
    pub mode: Option<ProviderMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every answer in a dataset.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank models by mean score across score directories.
    Rank {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise label comparison for one score directory.
    Compare {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export in-context examples or fine-tuning data chosen by score.
    Curate(CurateArgs),
    /// Check the divergence bounds and the data-processing argument on random discrete chains.
    Theory(TheoryArgs),
    /// Inspect or empty the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurateKind {
    Icl,
    Sft,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    pub kind: CurateKind,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Score directory whose `fewl` column picks answers.
    #[arg(long)]
    pub fewl_scores: PathBuf,
    /// Score directory for the comparison method.
    #[arg(long)]
    pub baseline_scores: PathBuf,
    /// Column of the baseline table to compare against.
    #[arg(long, default_value = "fewl")]
    pub baseline_column: String,
    #[arg(long, default_value_t = fewl::curate::DEFAULT_ICL_EXAMPLES)]
    pub examples: usize,
    #[arg(long, default_value_t = fewl::curate::DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    /// Also write pairwise judging prompts (top FEWL answer vs top baseline answer).
    #[arg(long)]
    pub emit_judge_prompts: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoryKind {
    Tv,
    Js,
    Kl,
    All,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, value_enum, default_value_t = TheoryKind::All)]
    pub kind: TheoryKind,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Alphabet sizes of the hidden truth, the optimal answer and the reference answer.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 4, 4])]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    Stats,
    Clear,
}
