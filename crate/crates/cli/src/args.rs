use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use judgekit_core::policy::LossKind;
use judgekit_core::ExtractMode;

#[derive(Debug, Parser)]
#[command(name = "judgekit", version, about = "Data pipeline, rewards, toy training and evaluation for LLM judges")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Input file (JSONL unless stated otherwise)
    #[arg(long, short, global = true)]
    pub input: Option<PathBuf>,

    /// Output file; a `<output>.manifest.json` is written next to it
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Seed for every stochastic step; a random seed is chosen and printed if absent
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML configuration file; command-line flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Valid source score range as MIN,MAX
    #[arg(long, global = true, value_name = "MIN,MAX")]
    pub score_range: Option<String>,

    /// Records with both scores at or below this are tagged both_bad
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub both_bad_threshold: Option<i64>,

    /// Number of question clusters
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Sample size
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// Completion format: full (sectioned) or fast (decision only)
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<ExtractMode>,

    /// Accept only canonical decision tokens
    #[arg(long, global = true, conflicts_with = "lenient_parse")]
    pub strict_parse: bool,

    /// Also accept forms such as `Answer A` as a decision
    #[arg(long, global = true)]
    pub lenient_parse: bool,
}

fn parse_mode(s: &str) -> Result<ExtractMode, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster questions and attach winner/difficulty tags to source records
    Tag(TagArgs),
    /// Draw a stratified sample of tagged records, excluding both_bad
    Sample,
    /// Build perturbation preference pairs from records
    MakeDpo(MakeDpoArgs),
    /// Build linked pointwise/pairwise instances from records
    MakeCrossmode,
    /// Score completions with the consistency reward
    ScoreRewards,
    /// Run the SFT, DPO, GRPO curriculum on the toy judge policy
    Train(TrainArgs),
    /// Agreement, macro-F1, consistency and bias metrics
    Eval(EvalArgs),
    /// Pointwise/pairwise consistency of score/label triples
    Consistency,
    /// Position and length bias audit
    Bias,
    /// Finite-difference checks of the training gradients
    Losscheck(LosscheckArgs),
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// JSONL of precomputed question embeddings `{"id", "vector"}`
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeDpoArgs {
    /// Comma-separated perturbations (order_swap, length_pad, format_change)
    #[arg(long, value_delimiter = ',')]
    pub perturbations: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Preference pairs for the DPO stage (output of make-dpo)
    #[arg(long)]
    pub dpo: Option<PathBuf>,

    /// Held-out records evaluated after every stage
    #[arg(long)]
    pub heldout: Option<PathBuf>,

    /// Epochs per stage as SFT,DPO,GRPO
    #[arg(long, value_name = "SFT,DPO,GRPO")]
    pub epochs: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Policy checkpoint; when given, the input holds records to judge
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Gold labels from a separate JSONL file, matched by line (`gold`, else `pred` or `label`)
    #[arg(long, conflicts_with = "checkpoint")]
    pub gold: Option<PathBuf>,

    /// Per-item CSV export
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LosscheckArgs {
    /// Objectives to check (sft, dpo, grpo); all by default
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Option<Vec<LossKind>>,

    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,

    /// Maximum relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

fn parse_kind(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "sft" => Ok(LossKind::Sft),
        "dpo" => Ok(LossKind::Dpo),
        "grpo" => Ok(LossKind::Grpo),
        other => Err(format!("unknown objective {other:?}")),
    }
}
