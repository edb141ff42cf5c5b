//! Parameter registration, naming, and initialization.

use crate::error::{invalid_argument, Result};
use crate::numerics::{Matrix, ParameterStore};
use crate::rng::Pcg32;
use crate::scalar::Scalar;

use super::ModelConfig;

/// Prefix of every classification-head parameter (the names the `head_only`
/// fine-tuning mode keeps trainable).
pub const HEAD_PREFIX: &str = "head.";

pub fn name_w_src(layer: usize, head: usize) -> String {
    format!("gat.{layer}.head.{head}.w_src")
}
pub fn name_w_dst(layer: usize, head: usize) -> String {
    format!("gat.{layer}.head.{head}.w_dst")
}
pub fn name_w_edge(layer: usize, head: usize) -> String {
    format!("gat.{layer}.head.{head}.w_edge")
}
pub fn name_attn(layer: usize, head: usize) -> String {
    format!("gat.{layer}.head.{head}.attn")
}

/// The model's learned weights, registered in a [`ParameterStore`] under
/// hierarchical names:
///
/// - `embed.object`, `embed.relation` — label embedding tables;
/// - `gat.{layer}.head.{head}.{w_src|w_dst|w_edge|attn}` — per-layer,
///   per-head attention weights (affine maps stored input × output);
/// - `pool.gate`, `pool.bias` — attention-pooling read-out;
/// - `head.mlp.{0|1}.{weight|bias}` — the two affine maps of the MLP head.
///
/// The name set and registration order are pure functions of the config, so
/// identical configs always produce identical store layouts.
#[derive(Clone, Debug)]
pub struct ModelParameters<S> {
    pub store: ParameterStore<S>,
    config: ModelConfig,
}

/// Expected (name, rows, cols) layout for a config, in registration order.
pub fn parameter_layout(config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let mut layout = vec![
        (
            "embed.object".to_string(),
            config.num_object_labels,
            config.object_embed_dim,
        ),
        (
            "embed.relation".to_string(),
            config.num_relation_labels,
            config.relation_embed_dim,
        ),
    ];
    let dh = config.head_dim();
    for layer in 0..config.num_layers {
        let in_dim = config.layer_input_dim(layer);
        for head in 0..config.num_heads {
            layout.push((name_w_src(layer, head), in_dim, dh));
            layout.push((name_w_dst(layer, head), in_dim, dh));
            layout.push((name_w_edge(layer, head), config.relation_embed_dim, dh));
            layout.push((name_attn(layer, head), dh, 1));
        }
    }
    layout.push(("pool.gate".to_string(), config.hidden_dim, 1));
    layout.push(("pool.bias".to_string(), 1, 1));
    layout.push((
        "head.mlp.0.weight".to_string(),
        config.hidden_dim,
        config.mlp_hidden(),
    ));
    layout.push(("head.mlp.0.bias".to_string(), 1, config.mlp_hidden()));
    layout.push((
        "head.mlp.1.weight".to_string(),
        config.mlp_hidden(),
        config.num_classes,
    ));
    layout.push(("head.mlp.1.bias".to_string(), 1, config.num_classes));
    layout
}

/// Total scalar count for a config — a pure function of the architecture.
pub fn parameter_count(config: &ModelConfig) -> usize {
    parameter_layout(config)
        .iter()
        .map(|(_, r, c)| r * c)
        .sum()
}

fn glorot_uniform<S: Scalar>(rows: usize, cols: usize, rng: &mut Pcg32) -> Matrix<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = S::of(rng.uniform(-limit, limit));
    }
    m
}

fn embedding_uniform<S: Scalar>(rows: usize, cols: usize, rng: &mut Pcg32) -> Matrix<S> {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = S::of(rng.uniform(-0.05, 0.05));
    }
    m
}

impl<S: Scalar> ModelParameters<S> {
    /// Fresh parameters: embeddings uniform(-0.05, 0.05), affine maps and
    /// attention vectors Glorot-uniform, biases zero. Draw order equals
    /// registration order, so one seeded stream fully determines the values.
    pub fn init(config: &ModelConfig, rng: &mut Pcg32) -> Result<Self> {
        config.validate()?;
        let mut store = ParameterStore::new();
        for (name, rows, cols) in parameter_layout(config) {
            let value = if name.starts_with("embed.") {
                embedding_uniform(rows, cols, rng)
            } else if name.ends_with(".bias") || name == "pool.bias" {
                Matrix::zeros(rows, cols)
            } else {
                glorot_uniform(rows, cols, rng)
            };
            store.add(name, value)?;
        }
        Ok(ModelParameters {
            store,
            config: config.clone(),
        })
    }

    /// Wraps an existing store (e.g. loaded from a checkpoint), verifying
    /// that its layout matches the config exactly.
    pub fn from_store(config: &ModelConfig, store: ParameterStore<S>) -> Result<Self> {
        config.validate()?;
        let expected = parameter_layout(config);
        if store.len() != expected.len() {
            return Err(invalid_argument(format!(
                "store has {} parameters, config expects {}",
                store.len(),
                expected.len()
            )));
        }
        for (param, (name, rows, cols)) in store.iter().zip(&expected) {
            if &param.name != name || param.value.shape() != (*rows, *cols) {
                return Err(invalid_argument(format!(
                    "parameter `{}` {:?} does not match expected `{}` ({}, {})",
                    param.name,
                    param.value.shape(),
                    name,
                    rows,
                    cols
                )));
            }
        }
        Ok(ModelParameters {
            store,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Unwraps the verified parameter store.
    pub fn into_store(self) -> ParameterStore<S> {
        self.store
    }
}
