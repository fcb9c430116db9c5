use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ktl_objectives::Method;

/// Knowledge triplet learning: graph building, training, zero-shot QA and checks.
#[derive(Debug, Parser)]
#[command(name = "ktl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract triples from a corpus (ccg) or from stories (dsg).
    BuildGraph(BuildGraphArgs),
    /// Keep triples sharing a chunk with the QA items.
    Filter(FilterArgs),
    /// Train a model on triples and write a checkpoint.
    Train(TrainArgs),
    /// Answer QA items and write predictions.
    Answer(ScoreArgs),
    /// Answer labeled QA items and write an accuracy report.
    Eval(ScoreArgs),
    /// Accuracy per distance component subset.
    Ablate(AblateArgs),
    /// Finite-difference check of every objective.
    Gradcheck(GradcheckArgs),
    /// Write the planted-knowledge fixture.
    MakeFixture(MakeFixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphType {
    Ccg,
    Dsg,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long = "type", value_enum)]
    pub graph_type: GraphType,
    /// Plain text, one sentence per line.
    #[arg(long, required_if_eq("graph_type", "ccg"), conflicts_with = "stories")]
    pub corpus: Option<PathBuf>,
    /// JSONL, one `{"sentences": [...]}` story per line.
    #[arg(long, required_if_eq("graph_type", "dsg"))]
    pub stories: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Overrides the configured objective.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss history; defaults to `<out>.history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Model,
    Random,
    Ir,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Checkpoint written by `train`.
    #[arg(long, required_if_eq("scorer", "model"))]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerKind::Model)]
    pub scorer: ScorerKind,
    #[arg(long)]
    pub qa: PathBuf,
    /// Sentences (one per line) or a saved index (`.json`).
    #[arg(long)]
    pub retrieval_corpus: Option<PathBuf>,
    #[arg(long)]
    pub hypothesis: bool,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Report JSON for eval and ablate, predictions JSONL for answer.
    #[arg(long)]
    pub out: PathBuf,
    /// Predictions JSONL for eval and ablate.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Subsets such as `A`, `Q*C`; defaults to A, Q, C and A*Q*C.
    #[arg(long = "components", value_delimiter = ',')]
    pub components: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct MakeFixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
