//! Command-line surface for the scene-graph classifier: generate synthetic
//! datasets, train/fine-tune, evaluate, cross-validate, predict, explain,
//! and inspect graphs.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 data or
//! schema error, 3 numeric failure. Every run prints its resolved effective
//! config (one JSON line) before doing any work, and every artifact is
//! JSON-first with a text rendering.

mod commands;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "asgra",
    version,
    about = "Scene-graph classification: generate, train, evaluate, explain",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene-graph dataset from a JSON spec
    Gen(GenArgs),
    /// Train or fine-tune a classifier, writing a checkpoint + history JSON
    Train(TrainArgs),
    /// Evaluate a checkpoint and emit a metrics report (text + JSON)
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation
    Crossval(CrossvalArgs),
    /// Classify one scene graph and show its attribution
    Predict(PredictArgs),
    /// Aggregate per-class importance tables from attention
    Explain(ExplainArgs),
    /// Print a graph's objects and (subject, predicate, object) triplets
    Inspect(InspectArgs),
}

/// Vocabulary override shared by data-touching commands.
#[derive(Args)]
struct VocabArgs {
    /// Object-label list, one per line (default: bundled VG150 table)
    #[arg(long)]
    objects: Option<PathBuf>,
    /// Relation-label list, one per line (default: bundled VG150 table)
    #[arg(long)]
    relations: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec JSON file
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for dataset.jsonl and splits.json
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset (.jsonl)
    #[arg(long)]
    data: PathBuf,
    /// Split assignment JSON (train and val ids are used)
    #[arg(long)]
    splits: PathBuf,
    /// Run config JSON: {"model": {...}, "train": {...}}
    #[arg(long)]
    config: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Training-history JSON path (default: <out>.history.json)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Warm-start checkpoint
    #[arg(long)]
    init: Option<PathBuf>,
    /// Fine-tuning mode: scratch, head (alias head_only), or full
    #[arg(long)]
    finetune: Option<String>,
    /// Confidence threshold override in [0, 1]
    #[arg(long)]
    tau: Option<f64>,
    /// Class list file, one name per line (default: bundled 8 scene classes)
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Accept a warm-start checkpoint whose vocabulary hashes differ
    #[arg(long)]
    allow_vocab_mismatch: bool,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset (.jsonl)
    #[arg(long)]
    data: PathBuf,
    /// Split assignment JSON (with --split)
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Which split to evaluate: train, val, or test (with --splits)
    #[arg(long)]
    split: Option<String>,
    /// Checkpoint to evaluate
    #[arg(long)]
    ckpt: PathBuf,
    /// Write the metrics report JSON here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Confidence threshold override (default: the checkpoint's)
    #[arg(long)]
    tau: Option<f64>,
    /// Class name reported as positive-class recall (binary tasks)
    #[arg(long)]
    positive_class: Option<String>,
    /// Accept a checkpoint whose vocabulary hashes differ
    #[arg(long)]
    allow_vocab_mismatch: bool,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct CrossvalArgs {
    /// Dataset (.jsonl); all labelled graphs participate
    #[arg(long)]
    data: PathBuf,
    /// Number of folds
    #[arg(long)]
    k: usize,
    /// Run config JSON: {"model": {...}, "train": {...}}
    #[arg(long)]
    config: PathBuf,
    /// Write the per-fold + aggregate JSON here (also printed)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Class list file, one name per line (default: bundled 8 scene classes)
    #[arg(long)]
    classes: Option<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Single-graph JSON file
    #[arg(long)]
    graph: PathBuf,
    /// Checkpoint to predict with
    #[arg(long)]
    ckpt: PathBuf,
    /// Accept a checkpoint whose vocabulary hashes differ
    #[arg(long)]
    allow_vocab_mismatch: bool,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct ExplainArgs {
    /// Dataset (.jsonl)
    #[arg(long)]
    data: PathBuf,
    /// Split assignment JSON (with --split)
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Which split to explain: train, val, or test (with --splits)
    #[arg(long)]
    split: Option<String>,
    /// Checkpoint whose attention is aggregated
    #[arg(long)]
    ckpt: PathBuf,
    /// Object rows per class
    #[arg(long, default_value_t = 10)]
    top_objects: usize,
    /// Relation rows per class
    #[arg(long, default_value_t = 5)]
    top_relations: usize,
    /// Attention layer feeding edge scores (default: final layer)
    #[arg(long)]
    layer: Option<usize>,
    /// Single attention head instead of the head mean
    #[arg(long)]
    head: Option<usize>,
    /// Also accumulate misclassified graphs (default: correct only)
    #[arg(long)]
    include_misclassified: bool,
    /// Divide each class's scores by its contributing-image count
    #[arg(long)]
    per_image_mean: bool,
    /// Write the tables JSON here (text is always printed)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Accept a checkpoint whose vocabulary hashes differ
    #[arg(long)]
    allow_vocab_mismatch: bool,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct InspectArgs {
    /// Single-graph JSON file
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
}

fn main() {
    // Die quietly when a downstream pipe (e.g. `| head`) closes early,
    // like any other Unix filter, instead of panicking on the write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen(args) => commands::cmd_gen(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Crossval(args) => commands::cmd_crossval(args),
        Command::Predict(args) => commands::cmd_predict(args),
        Command::Explain(args) => commands::cmd_explain(args),
        Command::Inspect(args) => commands::cmd_inspect(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
