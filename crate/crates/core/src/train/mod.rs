//! Training loop, early stopping, fine-tuning modes, cross-validation, and
//! checkpoint persistence.
//!
//! Training is fully determined by (data, configs, seed): parameter
//! initialization, per-epoch shuffles, and dropout masks each draw from
//! their own seeded stream, so identical runs produce byte-identical
//! checkpoints.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, ManifestEntry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Error, Result};
use crate::graph::{ClassLabelSet, SceneGraph, Vocabulary};
use crate::ingest::{filter_by_confidence, stratified_kfold, DatasetManifest};
use crate::metrics::{balanced_accuracy_detailed, confusion_matrix};
use crate::model::{
    forward_logits, loss_and_gradients, ModelConfig, ModelParameters, HEAD_PREFIX,
};
use crate::numerics::{cross_entropy_with_logits, AdamConfig, AdamState, Matrix, ParameterStore};
use crate::rng::{Pcg32, StreamId};
use crate::scalar::Scalar;

/// Which parameters a training run updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Train everything from fresh initialization.
    Scratch,
    /// Update only the MLP head; everything else stays frozen.
    #[serde(alias = "head")]
    HeadOnly,
    /// Update everything, typically starting from a checkpoint.
    Full,
}

impl std::fmt::Display for FinetuneMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FinetuneMode::Scratch => "scratch",
            FinetuneMode::HeadOnly => "head_only",
            FinetuneMode::Full => "full",
        };
        f.write_str(s)
    }
}

fn default_learning_rate() -> f64 {
    1e-4
}
fn default_weight_decay() -> f64 {
    3e-5
}
fn default_batch_size() -> usize {
    8
}
fn default_max_epochs() -> usize {
    120
}
fn default_patience() -> usize {
    10
}
fn default_finetune_mode() -> FinetuneMode {
    FinetuneMode::Scratch
}

/// Training hyperparameters. The JSON form mirrors these field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_finetune_mode")]
    pub finetune_mode: FinetuneMode,
    /// Inverse-frequency class weights in the loss.
    #[serde(default)]
    pub class_weighting: bool,
    /// Drop low-confidence edges/nodes below this threshold before training.
    #[serde(default)]
    pub confidence_tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_learning_rate(),
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            finetune_mode: default_finetune_mode(),
            class_weighting: false,
            confidence_tau: 0.0,
        }
    }
}

impl TrainConfig {
    /// The fixed-budget regime used for small forensic-style corpora:
    /// 20 epochs, no early stopping, retuned learning rate and decay.
    pub fn rcpd() -> Self {
        TrainConfig {
            learning_rate: 3.8e-4,
            weight_decay: 1.4e-5,
            max_epochs: 20,
            patience: 0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid_argument("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid_argument("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid_argument("batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(invalid_argument("max_epochs must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(invalid_argument("patience cannot exceed max_epochs"));
        }
        if !(0.0..=1.0).contains(&self.confidence_tau) {
            return Err(invalid_argument("confidence_tau must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One epoch's history entry (losses and validation balanced accuracy).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_balanced_accuracy: f64,
}

/// Early-stopping bookkeeping: tracks the best validation loss seen, keeps a
/// snapshot of the parameters that achieved it, and counts epochs since the
/// last strict improvement.
#[derive(Clone, Debug, Default)]
pub struct EarlyStopState<S> {
    best_val_loss: Option<f64>,
    best_epoch: usize,
    epochs_since_improvement: usize,
    snapshot: Vec<Matrix<S>>,
}

impl<S: Scalar> EarlyStopState<S> {
    pub fn new() -> Self {
        EarlyStopState {
            best_val_loss: None,
            best_epoch: 0,
            epochs_since_improvement: 0,
            snapshot: Vec::new(),
        }
    }

    /// Records one epoch's validation loss. Returns whether it strictly
    /// improved on the best; only then is the parameter snapshot replaced
    /// and the patience counter reset.
    pub fn observe(&mut self, epoch: usize, val_loss: f64, params: &ParameterStore<S>) -> bool {
        let improved = self.best_val_loss.is_none_or(|best| val_loss < best);
        if improved {
            self.best_val_loss = Some(val_loss);
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            self.snapshot = params.snapshot();
        } else {
            self.epochs_since_improvement += 1;
        }
        improved
    }

    /// True once `patience` epochs have passed without strict improvement.
    /// A patience of 0 disables early stopping.
    pub fn should_stop(&self, patience: usize) -> bool {
        patience > 0 && self.epochs_since_improvement >= patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_val_loss
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    /// Writes the best-epoch snapshot back into `params`.
    pub fn restore_best(&self, params: &mut ParameterStore<S>) {
        if !self.snapshot.is_empty() {
            params.restore(&self.snapshot);
        }
    }
}

/// Provenance a training run stamps into its checkpoint.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub object_vocab_hash: String,
    pub relation_vocab_hash: String,
    pub class_labels: Vec<String>,
}

impl RunContext {
    pub fn new(vocab: &Vocabulary, classes: &ClassLabelSet) -> Self {
        RunContext {
            object_vocab_hash: vocab.object_hash().to_string(),
            relation_vocab_hash: vocab.relation_hash().to_string(),
            class_labels: classes.names().to_vec(),
        }
    }
}

/// A finished training run: the checkpoint plus per-epoch wall-clock
/// seconds (kept out of the checkpoint so identical runs stay
/// byte-identical).
#[derive(Clone, Debug)]
pub struct TrainRun<S> {
    pub checkpoint: Checkpoint<S>,
    pub epoch_seconds: Vec<f64>,
}

/// Sets trainable flags per fine-tuning mode: `head_only` leaves exactly the
/// MLP-head parameters trainable; the other modes train everything.
pub fn apply_finetune_mask<S: Scalar>(store: &mut ParameterStore<S>, mode: FinetuneMode) {
    match mode {
        FinetuneMode::Scratch | FinetuneMode::Full => store.set_trainable_where(|_| true),
        FinetuneMode::HeadOnly => store.set_trainable_where(|name| name.starts_with(HEAD_PREFIX)),
    }
}

/// Inverse-frequency class weights over the training labels; classes absent
/// from the set get weight 0 (they never occur in a batch).
fn inverse_frequency_weights<S: Scalar>(
    graphs: &[&SceneGraph],
    num_classes: usize,
) -> Result<Vec<S>> {
    let mut counts = vec![0usize; num_classes];
    for g in graphs {
        let label = g
            .label
            .ok_or_else(|| invalid_argument(format!("graph `{}` has no class label", g.graph_id)))?;
        counts[label] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    let total = graphs.len();
    Ok(counts
        .iter()
        .map(|&c| {
            if c == 0 {
                S::zero()
            } else {
                S::of(total as f64 / (present as f64 * c as f64))
            }
        })
        .collect())
}

/// Applies the confidence filter to every graph when `tau > 0`. Graphs the
/// filter would empty out are kept unfiltered, with a warning. Returns
/// `None` when `tau` is 0 (nothing to filter).
pub fn apply_confidence_tau(graphs: &[SceneGraph], tau: f64) -> Option<Vec<SceneGraph>> {
    if tau == 0.0 {
        return None;
    }
    Some(
        graphs
            .iter()
            .map(|g| match filter_by_confidence(g, tau) {
                Ok(filtered) => filtered,
                Err(err) => {
                    log::warn!(
                        "confidence filter tau={tau} kept graph `{}` unfiltered: {err}",
                        g.graph_id
                    );
                    g.clone()
                }
            })
            .collect(),
    )
}

fn with_batch_context(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numeric { context } => Error::Numeric {
            context: format!("epoch {epoch}, batch {batch}: {context}"),
        },
        other => other,
    }
}

/// Predictions (and mean loss when every graph is labelled) of a parameter
/// store over `graphs`, evaluated in chunks of `batch_size`.
#[derive(Clone, Debug)]
pub struct EvalOutcome<S> {
    pub predictions: Vec<usize>,
    pub loss: Option<S>,
}

/// Runs the model in evaluation mode over `graphs`.
pub fn evaluate<S: Scalar>(
    store: &ParameterStore<S>,
    model_config: &ModelConfig,
    graphs: &[&SceneGraph],
    batch_size: usize,
    class_weights: Option<&[S]>,
) -> Result<EvalOutcome<S>> {
    if graphs.is_empty() {
        return Err(invalid_argument("cannot evaluate an empty graph set"));
    }
    let chunk_size = batch_size.max(1);
    let all_labelled = graphs.iter().all(|g| g.label.is_some());
    let mut predictions = Vec::with_capacity(graphs.len());
    let mut loss_sum = 0.0f64;
    let mut weight_sum = 0.0f64;
    for chunk in graphs.chunks(chunk_size) {
        let logits = forward_logits(chunk, model_config, store)?;
        for row in 0..logits.rows() {
            let r = logits.row(row);
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            predictions.push(best);
        }
        if all_labelled {
            let labels: Vec<usize> = chunk.iter().map(|g| g.label.unwrap()).collect();
            let (loss, _) = cross_entropy_with_logits(&logits, &labels, class_weights)?;
            let chunk_weight: f64 = match class_weights {
                Some(w) => labels.iter().map(|&l| w[l].as_f64()).sum(),
                None => labels.len() as f64,
            };
            loss_sum += loss.as_f64() * chunk_weight;
            weight_sum += chunk_weight;
        }
    }
    let loss = if all_labelled && weight_sum > 0.0 {
        Some(S::of(loss_sum / weight_sum))
    } else {
        None
    };
    Ok(EvalOutcome { predictions, loss })
}

/// Trains a model. Per epoch: a seeded deterministic shuffle, gradient
/// steps over batches of `batch_size` (the last partial batch included), a
/// full validation pass in evaluation mode, then the early-stopping update.
/// The returned checkpoint holds the parameters of the best validation
/// epoch and the full history.
pub fn train<S: Scalar>(
    train_set: &[SceneGraph],
    val_set: &[SceneGraph],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    initial: Option<&Checkpoint<S>>,
    context: &RunContext,
) -> Result<TrainRun<S>> {
    model_config.validate()?;
    train_config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid_argument("training and validation sets must be non-empty"));
    }
    if model_config.num_classes != context.class_labels.len() {
        return Err(invalid_argument(format!(
            "model expects {} classes but the label set has {}",
            model_config.num_classes,
            context.class_labels.len()
        )));
    }

    let filtered_train = apply_confidence_tau(train_set, train_config.confidence_tau);
    let filtered_val = apply_confidence_tau(val_set, train_config.confidence_tau);
    let train_refs: Vec<&SceneGraph> = match &filtered_train {
        Some(v) => v.iter().collect(),
        None => train_set.iter().collect(),
    };
    let val_refs: Vec<&SceneGraph> = match &filtered_val {
        Some(v) => v.iter().collect(),
        None => val_set.iter().collect(),
    };
    if val_refs.iter().any(|g| g.label.is_none()) {
        return Err(invalid_argument("validation graphs must be labelled"));
    }

    let mut store = match initial {
        Some(ckpt) => {
            if ckpt.model_config != *model_config {
                return Err(invalid_argument(
                    "initial checkpoint was trained with a different model config",
                ));
            }
            ckpt.store.clone()
        }
        None => {
            let mut init_rng = Pcg32::stream(train_config.seed, StreamId::Init, 0);
            ModelParameters::init(model_config, &mut init_rng)?.store
        }
    };
    apply_finetune_mask(&mut store, train_config.finetune_mode);

    let class_weights: Option<Vec<S>> = if train_config.class_weighting {
        Some(inverse_frequency_weights(
            &train_refs,
            model_config.num_classes,
        )?)
    } else {
        None
    };
    let cw = class_weights.as_deref();

    let mut adam = AdamState::new(
        &store,
        AdamConfig {
            learning_rate: train_config.learning_rate,
            weight_decay: train_config.weight_decay,
            ..AdamConfig::default()
        },
    );

    let val_labels: Vec<usize> = val_refs.iter().map(|g| g.label.unwrap()).collect();
    let mut indices: Vec<usize> = (0..train_refs.len()).collect();
    let mut early: EarlyStopState<S> = EarlyStopState::new();
    let mut history: Vec<EpochStats> = Vec::new();
    let mut epoch_seconds: Vec<f64> = Vec::new();

    for epoch in 1..=train_config.max_epochs {
        let started = Instant::now();
        let mut shuffle_rng = Pcg32::stream(train_config.seed, StreamId::Shuffle, epoch as u64);
        shuffle_rng.shuffle(&mut indices);
        let mut dropout_rng = Pcg32::stream(train_config.seed, StreamId::Dropout, epoch as u64);

        let mut loss_sum = 0.0f64;
        let mut weight_sum = 0.0f64;
        for (batch_no, chunk) in indices.chunks(train_config.batch_size).enumerate() {
            let graphs: Vec<&SceneGraph> = chunk.iter().map(|&i| train_refs[i]).collect();
            let loss =
                loss_and_gradients(&graphs, model_config, &mut store, &mut dropout_rng, cw)
                    .map_err(|e| with_batch_context(e, epoch, batch_no))?;
            adam.step(&mut store)
                .map_err(|e| with_batch_context(e, epoch, batch_no))?;
            let chunk_weight: f64 = match cw {
                Some(w) => graphs
                    .iter()
                    .map(|g| w[g.label.unwrap()].as_f64())
                    .sum(),
                None => graphs.len() as f64,
            };
            loss_sum += loss.as_f64() * chunk_weight;
            weight_sum += chunk_weight;
        }
        let train_loss = loss_sum / weight_sum;

        let val_outcome = evaluate(&store, model_config, &val_refs, train_config.batch_size, cw)?;
        let val_loss = val_outcome
            .loss
            .map(Scalar::as_f64)
            .expect("validation graphs are labelled");
        if !val_loss.is_finite() {
            return Err(Error::Numeric {
                context: format!("epoch {epoch}: non-finite validation loss"),
            });
        }
        let cm = confusion_matrix(
            &val_labels,
            &val_outcome.predictions,
            model_config.num_classes,
        )?;
        let (val_bacc, _) = balanced_accuracy_detailed(&cm)?;

        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_balanced_accuracy: val_bacc,
        });
        let seconds = started.elapsed().as_secs_f64();
        epoch_seconds.push(seconds);

        let improved = early.observe(epoch, val_loss, &store);
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val loss {val_loss:.6}{}, val balanced accuracy {val_bacc:.4}, {seconds:.2}s",
            if improved { " (best)" } else { "" }
        );
        if early.should_stop(train_config.patience) {
            log::info!(
                "early stop after epoch {epoch}: no improvement for {} epochs (best epoch {})",
                train_config.patience,
                early.best_epoch()
            );
            break;
        }
    }

    early.restore_best(&mut store);
    Ok(TrainRun {
        checkpoint: Checkpoint {
            model_config: model_config.clone(),
            train_config: train_config.clone(),
            object_vocab_hash: context.object_vocab_hash.clone(),
            relation_vocab_hash: context.relation_vocab_hash.clone(),
            class_labels: context.class_labels.clone(),
            history,
            best_epoch: early.best_epoch(),
            store,
        },
        epoch_seconds,
    })
}

/// One fold's evaluation in a cross-validation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub balanced_accuracy: f64,
    /// Recall per class; `None` where the fold holds no samples of a class.
    pub per_class_recall: Vec<Option<f64>>,
}

/// Cross-validation results: per-fold metrics plus mean and sample standard
/// deviation of balanced accuracy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldMetrics>,
    pub mean_balanced_accuracy: f64,
    pub std_balanced_accuracy: f64,
}

/// Stratified k-fold cross-validation: fold i trains on the other folds
/// (fold i as validation) and is evaluated on fold i, with the fold's
/// training seed derived as `seed + i`.
pub fn cross_validate<S: Scalar>(
    manifest: &DatasetManifest,
    k: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    context: &RunContext,
) -> Result<CrossValidation> {
    let plan = stratified_kfold(manifest, k, train_config.seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let train_graphs = manifest.select(&plan.train_indices(fold));
        let val_graphs = manifest.select(&plan.val_indices(fold));
        let fold_config = TrainConfig {
            seed: train_config.seed + fold as u64,
            ..train_config.clone()
        };
        let run: TrainRun<S> = train(
            &train_graphs,
            &val_graphs,
            model_config,
            &fold_config,
            None,
            context,
        )?;
        let val_refs: Vec<&SceneGraph> = val_graphs.iter().collect();
        let outcome = evaluate(
            &run.checkpoint.store,
            model_config,
            &val_refs,
            train_config.batch_size,
            None,
        )?;
        let labels: Vec<usize> = val_graphs.iter().map(|g| g.label.unwrap()).collect();
        let cm = confusion_matrix(&labels, &outcome.predictions, model_config.num_classes)?;
        let (bacc, _) = balanced_accuracy_detailed(&cm)?;
        let per_class_recall = (0..model_config.num_classes)
            .map(|c| {
                let row = cm.row_sum(c);
                if row == 0 {
                    None
                } else {
                    Some(cm.count(c, c) as f64 / row as f64)
                }
            })
            .collect();
        log::info!("fold {fold}: balanced accuracy {bacc:.4}");
        folds.push(FoldMetrics {
            fold,
            balanced_accuracy: bacc,
            per_class_recall,
        });
    }
    let values: Vec<f64> = folds.iter().map(|f| f.balanced_accuracy).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(CrossValidation {
        folds,
        mean_balanced_accuracy: mean,
        std_balanced_accuracy: var.sqrt(),
    })
}
