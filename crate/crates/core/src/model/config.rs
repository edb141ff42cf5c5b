//! Architecture hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};

fn default_object_embed_dim() -> usize {
    124
}
fn default_relation_embed_dim() -> usize {
    32
}
fn default_hidden_dim() -> usize {
    364
}
fn default_num_heads() -> usize {
    4
}
fn default_num_layers() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.2
}

/// Network shape. `hidden_dim` is the total width across heads (each head
/// computes `hidden_dim / num_heads` channels; the concatenation restores
/// `hidden_dim`).
///
/// The serde defaults encode the standard indoor-scenes configuration
/// (124/32 embeddings, 364 hidden, 4 heads, 2 layers, dropout 0.2); config
/// files may override any subset. The vocabulary-dependent sizes
/// (`num_object_labels`, `num_relation_labels`, `num_classes`) default to 0
/// and must be filled in from the active vocabulary and class set before
/// use — [`validate`](Self::validate) rejects zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub num_object_labels: usize,
    #[serde(default)]
    pub num_relation_labels: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default = "default_object_embed_dim")]
    pub object_embed_dim: usize,
    #[serde(default = "default_relation_embed_dim")]
    pub relation_embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_num_heads")]
    pub num_heads: usize,
    #[serde(default = "default_num_layers")]
    pub num_layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Hidden width of the MLP head; defaults to `hidden_dim` when absent.
    #[serde(default)]
    pub mlp_hidden_dim: Option<usize>,
}

impl ModelConfig {
    /// Default architecture bound to the given vocabulary and class sizes.
    pub fn new(num_object_labels: usize, num_relation_labels: usize, num_classes: usize) -> Self {
        ModelConfig {
            num_object_labels,
            num_relation_labels,
            num_classes,
            object_embed_dim: default_object_embed_dim(),
            relation_embed_dim: default_relation_embed_dim(),
            hidden_dim: default_hidden_dim(),
            num_heads: default_num_heads(),
            num_layers: default_num_layers(),
            dropout: default_dropout(),
            mlp_hidden_dim: None,
        }
    }

    pub fn with_hidden_dim(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_num_heads(mut self, num_heads: usize) -> Self {
        self.num_heads = num_heads;
        self
    }

    pub fn with_num_layers(mut self, num_layers: usize) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    /// Per-head channel count.
    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Width of assembled node features: object embedding plus 4 bbox
    /// coordinates.
    pub fn node_feature_dim(&self) -> usize {
        self.object_embed_dim + 4
    }

    /// Resolved MLP hidden width.
    pub fn mlp_hidden(&self) -> usize {
        self.mlp_hidden_dim.unwrap_or(self.hidden_dim)
    }

    /// Input width of GATv2 layer `layer`.
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.node_feature_dim()
        } else {
            self.hidden_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_object_labels", self.num_object_labels),
            ("num_relation_labels", self.num_relation_labels),
            ("object_embed_dim", self.object_embed_dim),
            ("relation_embed_dim", self.relation_embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("num_layers", self.num_layers),
            ("mlp_hidden", self.mlp_hidden()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(invalid_argument(format!("{name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(invalid_argument("num_classes must be at least 2"));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(invalid_argument(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid_argument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_standard_architecture() {
        let c = ModelConfig::new(151, 52, 8);
        assert_eq!(c.object_embed_dim, 124);
        assert_eq!(c.relation_embed_dim, 32);
        assert_eq!(c.hidden_dim, 364);
        assert_eq!(c.num_heads, 4);
        assert_eq!(c.num_layers, 2);
        assert_eq!(c.dropout, 0.2);
        assert_eq!(c.head_dim(), 91);
        assert_eq!(c.node_feature_dim(), 128);
        assert_eq!(c.mlp_hidden(), 364);
        c.validate().unwrap();
    }

    #[test]
    fn compact_variant_validates() {
        let c = ModelConfig::new(151, 52, 2)
            .with_hidden_dim(128)
            .with_num_heads(8);
        assert_eq!(c.head_dim(), 16);
        c.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_shapes() {
        assert!(ModelConfig::new(0, 52, 8).validate().is_err());
        assert!(ModelConfig::new(151, 52, 1).validate().is_err());
        assert!(ModelConfig::new(151, 52, 8)
            .with_hidden_dim(365)
            .validate()
            .is_err());
        assert!(ModelConfig::new(151, 52, 8)
            .with_dropout(1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"hidden_dim": 32, "num_heads": 2}"#).unwrap();
        assert_eq!(c.hidden_dim, 32);
        assert_eq!(c.num_layers, 2);
        assert_eq!(c.num_object_labels, 0);
        assert!(c.validate().is_err(), "zero vocab sizes must be rejected");
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let c = ModelConfig::new(151, 52, 8).with_dropout(0.0);
        let s = serde_json::to_string(&c).unwrap();
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
