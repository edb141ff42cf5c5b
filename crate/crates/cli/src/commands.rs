//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;

use asgra_core::error::{invalid_argument, Error};
use asgra_core::explain::{
    aggregate_importance, per_image_attribution, render_tables, AggregationOptions,
};
use asgra_core::graph::{ClassLabelSet, SceneGraph, Vocabulary};
use asgra_core::ingest::{
    load_manifest, parse_graph_record, DatasetManifest, Split, SplitAssignment,
};
use asgra_core::metrics::MetricsReport;
use asgra_core::model::{forward, Mode, ModelConfig};
use asgra_core::synthgen::{generate_dataset, render_jsonl, GeneratorSpec};
use asgra_core::train::{
    apply_confidence_tau, cross_validate, evaluate, load_checkpoint, save_checkpoint, train,
    CrossValidation, FinetuneMode, RunContext, TrainConfig, TrainRun,
};
use asgra_core::Checkpoint;

use crate::{
    CrossvalArgs, EvalArgs, ExplainArgs, GenArgs, InspectArgs, PredictArgs, TrainArgs, VocabArgs,
};

/// Command failure: either a flag-level usage mistake (exit 1) or an error
/// bubbled up from the engine (exit 2 or 3 per its classification).
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => e.exit_code(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CmdResult = Result<(), CliError>;

/// Prints the one-line resolved config every command emits before working.
fn print_effective(command: &str, settings: serde_json::Value) {
    let mut value = json!({ "command": command });
    if let (Some(obj), serde_json::Value::Object(extra)) = (value.as_object_mut(), settings) {
        obj.extend(extra);
    }
    println!("effective config: {value}");
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Core(Error::io(path.display().to_string(), e)))
}

/// Writes `contents`, creating parent directories as needed.
fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Core(Error::io(parent.display().to_string(), e)))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Core(Error::io(path.display().to_string(), e)))
}

impl VocabArgs {
    fn load(&self) -> Result<Vocabulary, CliError> {
        match (&self.objects, &self.relations) {
            (None, None) => Ok(Vocabulary::vg150()),
            (Some(o), Some(r)) => Ok(Vocabulary::from_files(o, r)?),
            _ => Err(usage("--objects and --relations must be given together")),
        }
    }
}

/// Loads a class list (one name per line); defaults to the bundled set.
fn load_classes(path: &Option<PathBuf>) -> Result<ClassLabelSet, CliError> {
    match path {
        None => Ok(ClassLabelSet::places8()),
        Some(p) => {
            let text = read_file(p)?;
            let names: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            Ok(ClassLabelSet::new(names)?)
        }
    }
}

/// Resolves --splits/--split into a graph subset (whole dataset when both
/// are absent).
fn select_split(
    manifest: &DatasetManifest,
    splits: &Option<PathBuf>,
    split: &Option<String>,
) -> Result<Vec<SceneGraph>, CliError> {
    match (splits, split) {
        (None, None) => Ok(manifest.graphs.clone()),
        (Some(path), Some(name)) => {
            let assignment = SplitAssignment::load(path)?;
            let which = Split::parse(name)?;
            let indices = assignment.indices(manifest, which)?;
            Ok(manifest.select(&indices))
        }
        (Some(_), None) => Err(usage("--splits requires --split")),
        (None, Some(_)) => Err(usage("--split requires --splits")),
    }
}

fn load_verified_checkpoint(
    path: &Path,
    vocab: &Vocabulary,
    allow_mismatch: bool,
) -> Result<Checkpoint, CliError> {
    let ckpt = load_checkpoint::<f64>(path)?;
    ckpt.verify_vocabulary(vocab, allow_mismatch)?;
    Ok(ckpt)
}

pub fn cmd_gen(args: &GenArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    let text = read_file(&args.spec)?;
    let mut spec = GeneratorSpec::from_json(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    print_effective(
        "gen",
        json!({
            "spec": args.spec,
            "out": args.out,
            "seed": spec.seed,
            "separation": spec.separation,
            "hallucination_rate": spec.hallucination_rate,
            "label_corruption_rate": spec.label_corruption_rate,
            "counts": spec.counts,
            "num_classes": spec.classes.len(),
        }),
    );
    let (manifest, splits) = generate_dataset(&spec, &vocab)?;
    let dataset_path = args.out.join("dataset.jsonl");
    write_file(&dataset_path, &render_jsonl(&manifest, &vocab)?)?;
    write_file(&args.out.join("splits.json"), &splits.to_json())?;
    println!(
        "wrote {} graphs to {} (+ splits.json)",
        manifest.len(),
        dataset_path.display()
    );
    Ok(())
}

/// The --config file for train/crossval.
#[derive(Deserialize)]
struct RunConfigFile {
    model: Option<ModelConfig>,
    train: TrainConfig,
}

fn parse_run_config(path: &Path) -> Result<RunConfigFile, CliError> {
    let text = read_file(path)?;
    let cfg: RunConfigFile = serde_json::from_str(&text).map_err(|e| {
        CliError::Core(asgra_core::error::schema_error(format!(
            "run config {}: {e}",
            path.display()
        )))
    })?;
    Ok(cfg)
}

/// Fills the model config's label-space sizes from the vocabulary and class
/// set, rejecting explicit values that contradict them.
fn resolve_model_config(
    mut model: ModelConfig,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
) -> Result<ModelConfig, CliError> {
    let fill = |slot: &mut usize, expected: usize, what: &str| -> Result<(), CliError> {
        if *slot == 0 {
            *slot = expected;
        } else if *slot != expected {
            return Err(CliError::Core(invalid_argument(format!(
                "model config pins {what} = {slot} but the run resolves it to {expected}"
            ))));
        }
        Ok(())
    };
    fill(
        &mut model.num_object_labels,
        vocab.num_object_labels(),
        "num_object_labels",
    )?;
    fill(
        &mut model.num_relation_labels,
        vocab.num_relation_labels(),
        "num_relation_labels",
    )?;
    fill(&mut model.num_classes, classes.len(), "num_classes")?;
    Ok(model)
}

fn parse_finetune(value: &str) -> Result<FinetuneMode, CliError> {
    match value {
        "scratch" => Ok(FinetuneMode::Scratch),
        "head" | "head_only" => Ok(FinetuneMode::HeadOnly),
        "full" => Ok(FinetuneMode::Full),
        other => Err(usage(format!(
            "--finetune must be scratch, head, or full (got `{other}`)"
        ))),
    }
}

pub fn cmd_train(args: &TrainArgs) -> CmdResult {
    let mut cfg = parse_run_config(&args.config)?;
    if let Some(mode) = &args.finetune {
        cfg.train.finetune_mode = parse_finetune(mode)?;
    }
    if let Some(tau) = args.tau {
        cfg.train.confidence_tau = tau;
    }
    if cfg.train.finetune_mode == FinetuneMode::HeadOnly && args.init.is_none() {
        return Err(usage("--finetune head requires --init <checkpoint>"));
    }

    let vocab = args.vocab.load()?;
    let classes = load_classes(&args.classes)?;
    let initial = match &args.init {
        None => None,
        Some(path) => {
            let ckpt = load_verified_checkpoint(path, &vocab, args.allow_vocab_mismatch)?;
            if ckpt.class_labels != classes.names() {
                return Err(CliError::Core(invalid_argument(format!(
                    "checkpoint {} was trained on different classes",
                    path.display()
                ))));
            }
            Some(ckpt)
        }
    };
    let model_config = match (&initial, cfg.model.take()) {
        (Some(ckpt), maybe_model) => {
            let resolved = ckpt.model_config.clone();
            if let Some(model) = maybe_model {
                if resolve_model_config(model, &vocab, &classes)? != resolved {
                    return Err(CliError::Core(invalid_argument(
                        "run config's model section conflicts with --init checkpoint",
                    )));
                }
            }
            resolved
        }
        (None, maybe_model) => {
            let base = maybe_model.unwrap_or_else(|| ModelConfig::new(0, 0, 0));
            resolve_model_config(base, &vocab, &classes)?
        }
    };

    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.json", args.out.display())));
    print_effective(
        "train",
        json!({
            "data": args.data,
            "splits": args.splits,
            "out": args.out,
            "history": history_path,
            "init": args.init,
            "model": model_config,
            "train": cfg.train,
        }),
    );

    let manifest = load_manifest(&args.data, &vocab, &classes, true)?;
    let assignment = SplitAssignment::load(&args.splits)?;
    let train_set = manifest.select(&assignment.indices(&manifest, Split::Train)?);
    let val_set = manifest.select(&assignment.indices(&manifest, Split::Val)?);
    let context = RunContext::new(&vocab, &classes);

    let run: TrainRun<f64> = train(
        &train_set,
        &val_set,
        &model_config,
        &cfg.train,
        initial.as_ref(),
        &context,
    )?;
    save_checkpoint(&run.checkpoint, &args.out)?;

    let best = run.checkpoint.best_epoch;
    let best_stats = run.checkpoint.history[best - 1];
    let history = json!({
        "epochs": run.checkpoint.history,
        "best_epoch": best,
        "epoch_seconds": run.epoch_seconds,
        "final_val_balanced_accuracy": best_stats.val_balanced_accuracy,
    });
    write_file(
        &history_path,
        &serde_json::to_string_pretty(&history).expect("history serializes"),
    )?;
    println!("checkpoint written to {}", args.out.display());
    println!(
        "final val balanced accuracy: {:.4} (best epoch {best})",
        best_stats.val_balanced_accuracy
    );
    Ok(())
}

/// Labels of an all-labelled evaluation set, or the data error naming the
/// first unlabelled graph.
fn require_labels(graphs: &[SceneGraph]) -> Result<Vec<usize>, CliError> {
    graphs
        .iter()
        .map(|g| {
            g.label.ok_or_else(|| {
                CliError::Core(invalid_argument(format!(
                    "graph `{}` has no label; evaluation needs labelled data",
                    g.graph_id
                )))
            })
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    let ckpt = load_verified_checkpoint(&args.ckpt, &vocab, args.allow_vocab_mismatch)?;
    let classes = ClassLabelSet::new(ckpt.class_labels.clone())?;
    let tau = args.tau.unwrap_or(ckpt.train_config.confidence_tau);
    let positive = match &args.positive_class {
        None => None,
        Some(name) => Some(classes.index_of(name).ok_or_else(|| {
            CliError::Core(invalid_argument(format!("unknown class `{name}`")))
        })?),
    };
    print_effective(
        "eval",
        json!({
            "data": args.data,
            "splits": args.splits,
            "split": args.split,
            "ckpt": args.ckpt,
            "report": args.report,
            "tau": tau,
            "positive_class": args.positive_class,
        }),
    );

    let manifest = load_manifest(&args.data, &vocab, &classes, true)?;
    let mut graphs = select_split(&manifest, &args.splits, &args.split)?;
    if let Some(filtered) = apply_confidence_tau(&graphs, tau) {
        graphs = filtered;
    }
    let truth = require_labels(&graphs)?;
    let refs: Vec<&SceneGraph> = graphs.iter().collect();
    let outcome = evaluate(
        &ckpt.store,
        &ckpt.model_config,
        &refs,
        ckpt.train_config.batch_size,
        None,
    )?;
    let tags: Vec<Option<String>> = graphs.iter().map(|g| g.subset_tag.clone()).collect();
    let report = MetricsReport::from_predictions(
        &truth,
        &outcome.predictions,
        &tags,
        classes.names(),
        positive,
    )?;
    print!("{}", report.render_text());
    if let Some(path) = &args.report {
        write_file(
            path,
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

pub fn cmd_crossval(args: &CrossvalArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    let classes = load_classes(&args.classes)?;
    let mut cfg = parse_run_config(&args.config)?;
    let model_config = resolve_model_config(
        cfg.model.take().unwrap_or_else(|| ModelConfig::new(0, 0, 0)),
        &vocab,
        &classes,
    )?;
    print_effective(
        "crossval",
        json!({
            "data": args.data,
            "k": args.k,
            "report": args.report,
            "model": model_config,
            "train": cfg.train,
        }),
    );
    let manifest = load_manifest(&args.data, &vocab, &classes, true)?;
    let context = RunContext::new(&vocab, &classes);
    let cv: CrossValidation =
        cross_validate::<f64>(&manifest, args.k, &model_config, &cfg.train, &context)?;
    let rendered = serde_json::to_string_pretty(&cv).expect("cross-validation serializes");
    println!("{rendered}");
    if let Some(path) = &args.report {
        write_file(path, &rendered)?;
    }
    Ok(())
}

/// Softmax probability of the winning class.
fn prediction_confidence(logits: &[f64], predicted: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    (logits[predicted] - max).exp() / sum
}

pub fn cmd_predict(args: &PredictArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    let ckpt = load_verified_checkpoint(&args.ckpt, &vocab, args.allow_vocab_mismatch)?;
    let classes = ClassLabelSet::new(ckpt.class_labels.clone())?;
    print_effective("predict", json!({ "graph": args.graph, "ckpt": args.ckpt }));

    let text = read_file(&args.graph)?;
    let graph = parse_graph_record(text.trim(), &vocab, &classes)?;
    let (logits, record) = forward(&graph, &ckpt.model_config, &ckpt.store, Mode::Eval, None)?;
    let confidence = prediction_confidence(&logits, record.predicted);
    println!(
        "prediction: {} (confidence {confidence:.4})",
        classes.name(record.predicted)
    );

    let report = per_image_attribution(&record, &graph, &vocab, &classes)?;
    println!("object importance:");
    for node in &report.nodes {
        println!("  {:<24} {:.4}", node.label, node.importance);
    }
    if !report.edges.is_empty() {
        println!("relation importance:");
        for edge in &report.edges {
            println!(
                "  ({}, {}, {})  {:.4}",
                edge.subject, edge.predicate, edge.object, edge.importance
            );
        }
    }
    Ok(())
}

pub fn cmd_explain(args: &ExplainArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    let ckpt = load_verified_checkpoint(&args.ckpt, &vocab, args.allow_vocab_mismatch)?;
    let classes = ClassLabelSet::new(ckpt.class_labels.clone())?;
    let options = AggregationOptions {
        only_correct: !args.include_misclassified,
        layer: args.layer,
        head: args.head,
        per_image_mean: args.per_image_mean,
        batch_size: ckpt.train_config.batch_size,
    };
    print_effective(
        "explain",
        json!({
            "data": args.data,
            "splits": args.splits,
            "split": args.split,
            "ckpt": args.ckpt,
            "top_objects": args.top_objects,
            "top_relations": args.top_relations,
            "layer": args.layer,
            "head": args.head,
            "only_correct": options.only_correct,
            "per_image_mean": args.per_image_mean,
            "report": args.report,
        }),
    );

    let manifest = load_manifest(&args.data, &vocab, &classes, true)?;
    let graphs = select_split(&manifest, &args.splits, &args.split)?;
    let refs: Vec<&SceneGraph> = graphs.iter().collect();
    let table = aggregate_importance(
        &refs,
        &ckpt.model_config,
        &ckpt.store,
        &vocab,
        &classes,
        &options,
    )?;
    let (text, json_value) = render_tables(&table, args.top_objects, args.top_relations);
    print!("{text}");
    if let Some(path) = &args.report {
        write_file(
            path,
            &serde_json::to_string_pretty(&json_value).expect("tables serialize"),
        )?;
        println!("tables written to {}", path.display());
    }
    Ok(())
}

pub fn cmd_inspect(args: &InspectArgs) -> CmdResult {
    let vocab = args.vocab.load()?;
    print_effective("inspect", json!({ "graph": args.graph }));
    let text = read_file(&args.graph)?;
    // Inspection has no model to borrow a class set from, so the label is
    // peeled off before parsing and echoed verbatim; the structural checks
    // still run on everything else.
    let mut peek: serde_json::Value = serde_json::from_str(text.trim())
        .map_err(|e| CliError::Core(asgra_core::error::schema_error(e.to_string())))?;
    let peeked_label = peek.get("label").and_then(|v| v.as_str()).map(str::to_owned);
    if let Some(map) = peek.as_object_mut() {
        map.remove("label");
    }
    let unlabelled = serde_json::to_string(&peek)
        .map_err(|e| CliError::Core(asgra_core::error::schema_error(e.to_string())))?;
    let graph = parse_graph_record(&unlabelled, &vocab, &ClassLabelSet::places8())?;

    let label = match peeked_label {
        Some(name) => format!(", label `{name}`"),
        None => String::new(),
    };
    println!(
        "graph `{}`: {} nodes, {} edges{label}",
        graph.graph_id,
        graph.nodes.len(),
        graph.edges.len()
    );
    println!("objects:");
    for node in &graph.nodes {
        println!(
            "  #{} {} (confidence {:.2})",
            node.node_id,
            vocab.object_label(node.label_index),
            node.confidence
        );
    }
    if !graph.edges.is_empty() {
        println!("triplets:");
        for edge in &graph.edges {
            println!(
                "  ({}, {}, {})",
                vocab.object_label(graph.nodes[edge.subject_id].label_index),
                vocab.relation_label(edge.predicate_index),
                vocab.object_label(graph.nodes[edge.object_id].label_index)
            );
        }
    }
    Ok(())
}
