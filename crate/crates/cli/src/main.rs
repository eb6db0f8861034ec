//! `podintro`: command-line driver for the introduction-detection toolkit.
//!
//! Every command reads its inputs from flags only, writes its outputs
//! atomically and leaves a `<output>.manifest.json` beside the primary output.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use podintro::augment::Strategy;
use podintro::corpus::{Tolerance, DEFAULT_TOLERANCE_MS, DEFAULT_TOLERANCE_TOKENS};
use podintro::splitter::SplitRole;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "podintro", version, about = "Locate episode introductions in podcast transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus against the schema and document invariants.
    Validate(ValidateArgs),
    /// Report annotator agreement on triply-annotated episodes.
    Agreement(AgreementArgs),
    /// Resolve gold introductions from the annotations.
    Gold(GoldArgs),
    /// Split a corpus into seen/unseen train, test and validation sets.
    Split(SplitArgs),
    /// Generate a synthetic corpus with planted introductions.
    Synth(SynthArgs),
    /// Append augmented copies of training documents.
    Augment(AugmentArgs),
    /// Train the logistic token scorer.
    Train(TrainArgs),
    /// Write per-token introduction probabilities.
    Score(ScoreArgs),
    /// Detect introduction boundaries from a score file.
    Segment(SegmentArgs),
    /// Score predictions against gold labels.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Serialize, Clone, Copy)]
struct ToleranceArgs {
    /// Timestamp agreement window, in milliseconds.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_MS)]
    tolerance_ms: u64,
    /// Index agreement window, used when timestamps are missing.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_TOKENS)]
    tolerance_tokens: usize,
}

impl From<ToleranceArgs> for Tolerance {
    fn from(t: ToleranceArgs) -> Self {
        Tolerance {
            ms: t.tolerance_ms,
            tokens: t.tolerance_tokens,
        }
    }
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    corpus: PathBuf,
}

#[derive(Args, Serialize)]
struct AgreementArgs {
    corpus: PathBuf,
    #[command(flatten)]
    tolerance: ToleranceArgs,
    /// Also write the report to this file (it is always printed).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct GoldArgs {
    corpus: PathBuf,
    #[command(flatten)]
    tolerance: ToleranceArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    corpus: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Fractions: unseen_test,unseen_val,seen_test,seen_val.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.05, 0.05, 0.10, 0.10])]
    fracs: Vec<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// JSON generator configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write random word vectors covering the synthetic vocabulary.
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 50, requires = "embeddings_out")]
    dim: usize,
}

#[derive(ValueEnum, Serialize, Clone, Copy)]
enum StrategyArg {
    /// TF-IDF based word replacement.
    Tfidfwr,
    /// Random swap, delete or crop.
    Randaug,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Tfidfwr => Strategy::TfidfReplace,
            StrategyArg::Randaug => Strategy::RandomEdit,
        }
    }
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    corpus: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 5)]
    copies: usize,
    /// Per-token edit probability.
    #[arg(long, default_value_t = 0.15)]
    p: f64,
    #[arg(long)]
    seed: u64,
    /// Random-edit copies of documents this long must stay this long.
    #[arg(long, default_value_t = 2 * podintro::boundary::DEFAULT_K)]
    min_len: usize,
    /// Augment only the training set of this split manifest.
    #[arg(long)]
    split: Option<PathBuf>,
    #[command(flatten)]
    tolerance: ToleranceArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    corpus: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Gold labels; resolved from the corpus annotations when omitted.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_class_weighting: bool,
    #[command(flatten)]
    tolerance: ToleranceArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    #[arg(long, default_value_t = 128)]
    overlap: usize,
    #[command(flatten)]
    subset: SubsetArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct SubsetArgs {
    /// Split manifest used with --subset.
    #[arg(long, requires = "subset")]
    split: Option<PathBuf>,
    /// Restrict to one set of the split manifest.
    #[arg(long, requires = "split", value_parser = parse_role)]
    #[serde(serialize_with = "serialize_role")]
    subset: Option<SplitRole>,
}

fn parse_role(s: &str) -> Result<SplitRole, String> {
    s.parse().map_err(|e: podintro::Error| e.to_string())
}

fn serialize_role<S: serde::Serializer>(role: &Option<SplitRole>, s: S) -> Result<S::Ok, S::Error> {
    match role {
        Some(r) => s.serialize_str(r.name()),
        None => s.serialize_none(),
    }
}

#[derive(Args, Serialize)]
struct SegmentArgs {
    scores: PathBuf,
    #[arg(long, default_value_t = podintro::boundary::DEFAULT_K)]
    k: usize,
    #[arg(long)]
    no_enforce_order: bool,
    /// Abstain when the best start likelihood is below this value.
    #[arg(long)]
    min_peak: Option<f64>,
    /// Check every score sequence against this corpus first.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    predictions: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = podintro::eval::DEFAULT_OFFSETS)]
    offsets: Vec<usize>,
    /// Further prediction files from repeated runs of the same scorer.
    #[arg(long, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[command(flatten)]
    subset: SubsetArgs,
    /// Row label in the text table.
    #[arg(long, default_value = "model")]
    scorer: String,
    /// Window size used for segmentation, recorded in the report.
    #[arg(long)]
    k: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => commands::validate(&a),
        Command::Agreement(a) => commands::agreement(&a),
        Command::Gold(a) => commands::gold(&a),
        Command::Split(a) => commands::split(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Train(a) => commands::train(&a),
        Command::Score(a) => commands::score(&a),
        Command::Segment(a) => commands::segment(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
