//! Graph classification model: edge-featured GATv2 layers over a scene
//! graph, attention pooling, and an MLP class head.
//!
//! Node features are an object-label embedding concatenated with the
//! normalized bounding box. Each layer scores every message edge with a
//! per-head additive-attention mechanism
//! (`a · leaky_relu(W_src h_s + W_dst h_t + W_edge f)`), softmaxes scores
//! over the incoming edges of each destination node, and aggregates messages
//! `W_dst h_s + W_edge f`; head outputs are concatenated. Self-loops carry a
//! reserved relation index — by convention the *last* row of the relation
//! embedding table — so isolated nodes still receive a message.
//!
//! The backward pass is written by hand against cached intermediates and is
//! exercised by finite-difference checks in the test suite.

mod backward;
mod batch;
mod config;
mod forward;
mod params;

pub use batch::{build_message_graph, GraphBatch, MessageEdge};
pub use config::ModelConfig;
pub use forward::{attention_pool, AttentionRecord, RecordedEdge};
pub use params::{parameter_count, parameter_layout, ModelParameters, HEAD_PREFIX};

use crate::error::Result;
use crate::graph::SceneGraph;
use crate::numerics::{cross_entropy_with_logits, Matrix, ParameterStore};
use crate::rng::Pcg32;
use crate::scalar::Scalar;

pub(crate) use forward::{extract_records, forward_batch};

/// Negative-slope coefficient of the attention leaky-relu.
pub const ATTENTION_LEAKY_SLOPE: f64 = 0.2;

/// Whether dropout is live (`Train`) or bypassed (`Eval`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Index used for self-loop edges: the last relation-embedding row.
pub fn self_loop_relation(config: &ModelConfig) -> usize {
    config.num_relation_labels - 1
}

/// Assembles the initial node-feature matrix (embedding ∥ bbox) of one graph.
pub fn assemble_node_features<S: Scalar>(
    graph: &SceneGraph,
    config: &ModelConfig,
    store: &ParameterStore<S>,
) -> Matrix<S> {
    let batch = GraphBatch::build(&[graph], self_loop_relation(config));
    forward::assemble_features_batch(config, store, &batch)
}

/// Runs one edge-featured GATv2 layer. Returns the aggregated node outputs
/// (no activation applied) and the per-head attention matrix (edges × heads).
pub fn gatv2_layer<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    layer: usize,
    input: &Matrix<S>,
    edges: &[MessageEdge],
) -> Result<(Matrix<S>, Matrix<S>)> {
    let rel_feat = forward::gather_relation_features(config, store, edges);
    let cache = forward::layer_forward(config, store, layer, input, edges, &rel_feat, false, None)?;
    Ok((cache.out_pre, cache.alpha))
}

/// Forward pass over a single graph. In `Mode::Train` with a nonzero dropout
/// rate an rng stream must be supplied. Returns the logits and the attention
/// record used for explanations.
pub fn forward<S: Scalar>(
    graph: &SceneGraph,
    config: &ModelConfig,
    store: &ParameterStore<S>,
    mode: Mode,
    rng: Option<&mut Pcg32>,
) -> Result<(Vec<S>, AttentionRecord<S>)> {
    let batch = GraphBatch::build(&[graph], self_loop_relation(config));
    let cache = forward_batch(config, store, &batch, mode, rng)?;
    let record = extract_records(&batch, &cache)
        .pop()
        .expect("one record per graph");
    Ok((record.logits.clone(), record))
}

/// Forward pass over a slice of graphs in evaluation mode; returns the
/// (graphs × classes) logit matrix.
pub fn forward_logits<S: Scalar>(
    graphs: &[&SceneGraph],
    config: &ModelConfig,
    store: &ParameterStore<S>,
) -> Result<Matrix<S>> {
    let batch = GraphBatch::build(graphs, self_loop_relation(config));
    let cache = forward_batch(config, store, &batch, Mode::Eval, None)?;
    Ok(cache.logits)
}

/// One training step's loss and gradients: zeroes the store's gradient
/// buffers, runs the batched forward pass in training mode, applies the
/// cross-entropy loss (optionally class-weighted), and backpropagates.
/// Every graph must carry a class label.
pub fn loss_and_gradients<S: Scalar>(
    graphs: &[&SceneGraph],
    config: &ModelConfig,
    store: &mut ParameterStore<S>,
    rng: &mut Pcg32,
    class_weights: Option<&[S]>,
) -> Result<S> {
    let batch = GraphBatch::build(graphs, self_loop_relation(config));
    let labels = batch.required_labels()?;
    store.zero_grads();
    let cache = forward_batch(config, store, &batch, Mode::Train, Some(rng))?;
    let (loss, dlogits) = cross_entropy_with_logits(&cache.logits, &labels, class_weights)?;
    backward::backward_batch(config, store, &batch, &cache, &dlogits)?;
    Ok(loss)
}

/// Evaluation-mode loss over labelled graphs (no gradients).
pub fn evaluation_loss<S: Scalar>(
    graphs: &[&SceneGraph],
    config: &ModelConfig,
    store: &ParameterStore<S>,
    class_weights: Option<&[S]>,
) -> Result<S> {
    let batch = GraphBatch::build(graphs, self_loop_relation(config));
    let labels = batch.required_labels()?;
    let cache = forward_batch(config, store, &batch, Mode::Eval, None)?;
    let (loss, _) = cross_entropy_with_logits(&cache.logits, &labels, class_weights)?;
    Ok(loss)
}
