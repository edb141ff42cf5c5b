//! Scene-graph classification engine.
//!
//! Classifies images of indoor and outdoor scenes from their *scene graphs*
//! alone: the objects detected in an image, their bounding boxes, and the
//! predicate relations between them. No pixel data is ever consumed. Graphs
//! are encoded with learned label embeddings, refined by edge-featured
//! graph attention (GATv2) layers, condensed by an attention pooling read-out,
//! and classified by a small MLP head. The attention weights double as a
//! built-in explanation mechanism: per-image and per-class importance of
//! objects and relations falls directly out of the forward pass.
//!
//! Module map:
//!
//! - [`graph`] — vocabularies, scene-graph data model, validation.
//! - [`ingest`] — JSONL dataset loading, splits, confidence filtering,
//!   stratified k-fold plans.
//! - [`numerics`] — dense matrices, deterministic kernels, Adam, and a
//!   finite-difference gradient checker.
//! - [`model`] — feature assembly, GATv2 layers, attention pooling, the
//!   classifier head, and hand-written reverse-mode gradients.
//! - [`train`] — training/fine-tuning loops, early stopping, checkpoints,
//!   cross-validation.
//! - [`metrics`] — confusion matrices, balanced accuracy, per-subset reports.
//! - [`explain`] — attention-based attribution reports and class importance
//!   tables.
//! - [`synthgen`] — synthetic scene-graph generator for controlled
//!   experiments and tests.
//!
//! All floating-point computation is generic over the [`Scalar`] trait
//! (implemented for `f32` and `f64`); the type aliases at the crate root fix
//! the default precision to `f64`, which is what checkpoints store.
//!
//! Determinism is a design contract: every random draw flows from one
//! explicitly seeded [`rng::Pcg32`] stream, reductions run in fixed order,
//! and repeated runs with the same seed produce byte-identical checkpoints.

pub mod error;
pub mod explain;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod scalar;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision matrix.
pub type Matrix = numerics::Matrix<f64>;
/// Default-precision parameter store.
pub type ParameterStore = numerics::ParameterStore<f64>;
/// Default-precision Adam optimizer state.
pub type AdamState = numerics::AdamState<f64>;
/// Default-precision model parameters.
pub type ModelParameters = model::ModelParameters<f64>;
/// Default-precision attention record.
pub type AttentionRecord = model::AttentionRecord<f64>;
/// Default-precision checkpoint.
pub type Checkpoint = train::Checkpoint<f64>;
