//! Batched forward pass.
//!
//! Every intermediate the backward pass needs is cached here, so gradients
//! never recompute attention or re-draw dropout masks. Dropout draws follow
//! a fixed order (per layer: feature mask then attention mask; finally the
//! MLP mask), which makes training bit-reproducible for a given stream.

use crate::error::{invalid_argument, numeric_error, Result};
use crate::numerics::{
    dropout_mask, elu, relu, segment_softmax, tanh_elementwise, Matrix, ParameterStore,
};
use crate::rng::Pcg32;
use crate::scalar::Scalar;

use super::batch::{GraphBatch, MessageEdge};
use super::params::{name_attn, name_w_dst, name_w_edge, name_w_src};
use super::{Mode, ModelConfig, ATTENTION_LEAKY_SLOPE};

/// Per-layer saved intermediates.
pub(crate) struct LayerCache<S> {
    /// Layer input after feature dropout (n × in_dim).
    pub x: Matrix<S>,
    pub feat_mask: Option<Matrix<S>>,
    /// Score pre-activation per edge (m × hidden).
    pub u: Matrix<S>,
    /// Message content per edge (m × hidden).
    pub msg: Matrix<S>,
    /// Pre-dropout attention (m × heads).
    pub alpha: Matrix<S>,
    /// Attention used in aggregation (post-dropout in training).
    pub alpha_used: Matrix<S>,
    pub attn_mask: Option<Matrix<S>>,
    /// Aggregated output before the inter-layer activation (n × hidden).
    pub out_pre: Matrix<S>,
}

/// Everything the backward pass consumes.
pub(crate) struct ForwardCache<S> {
    pub rel_feat: Matrix<S>,
    pub layers: Vec<LayerCache<S>>,
    pub tanh_h: Matrix<S>,
    pub pool_w: Vec<S>,
    pub pooled: Matrix<S>,
    pub z1: Matrix<S>,
    pub a1_used: Matrix<S>,
    pub mlp_mask: Option<Matrix<S>>,
    pub logits: Matrix<S>,
}

impl<S: Scalar> ForwardCache<S> {
    /// Final node representations (last layer output, no activation).
    pub fn h_final(&self) -> &Matrix<S> {
        &self.layers.last().expect("at least one layer").out_pre
    }
}

/// Concatenates the per-head weight matrices of one layer into a single
/// (in_dim × hidden) buffer, head k occupying columns [k·d_h, (k+1)·d_h).
pub(crate) fn fused_weights<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    layer: usize,
    name: fn(usize, usize) -> String,
    in_dim: usize,
) -> Matrix<S> {
    let dh = config.head_dim();
    let mut fused = Matrix::zeros(in_dim, config.hidden_dim);
    for head in 0..config.num_heads {
        let w = store.value(&name(layer, head));
        debug_assert_eq!(w.shape(), (in_dim, dh));
        for r in 0..in_dim {
            fused.row_mut(r)[head * dh..(head + 1) * dh].copy_from_slice(w.row(r));
        }
    }
    fused
}

/// Concatenates the per-head attention vectors into one hidden-wide vector.
pub(crate) fn fused_attention<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    layer: usize,
) -> Vec<S> {
    let mut out = Vec::with_capacity(config.hidden_dim);
    for head in 0..config.num_heads {
        out.extend_from_slice(store.value(&name_attn(layer, head)).data());
    }
    out
}

/// Node feature assembly for a whole batch: embedding row ∥ bbox.
pub(crate) fn assemble_features_batch<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    batch: &GraphBatch,
) -> Matrix<S> {
    let table = store.value("embed.object");
    let obj_dim = config.object_embed_dim;
    let mut out = Matrix::zeros(batch.total_nodes(), config.node_feature_dim());
    for i in 0..batch.total_nodes() {
        let row = out.row_mut(i);
        row[..obj_dim].copy_from_slice(table.row(batch.node_labels[i]));
        for (j, &v) in batch.node_bboxes[i].iter().enumerate() {
            row[obj_dim + j] = S::of(v);
        }
    }
    out
}

/// Relation-embedding rows per message edge (m × relation_embed_dim).
pub(crate) fn gather_relation_features<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    edges: &[MessageEdge],
) -> Matrix<S> {
    let table = store.value("embed.relation");
    let mut out = Matrix::zeros(edges.len(), config.relation_embed_dim);
    for (e, edge) in edges.iter().enumerate() {
        out.row_mut(e).copy_from_slice(table.row(edge.relation_index));
    }
    out
}

fn need_rng<'a>(rng: &'a mut Option<&mut Pcg32>) -> Result<&'a mut Pcg32> {
    rng.as_deref_mut()
        .ok_or_else(|| invalid_argument("training-mode forward needs an rng stream"))
}

/// One edge-featured GATv2 layer over a prepared message graph.
pub(crate) fn layer_forward<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    layer: usize,
    input: &Matrix<S>,
    edges: &[MessageEdge],
    rel_feat: &Matrix<S>,
    dropout_on: bool,
    mut rng: Option<&mut Pcg32>,
) -> Result<LayerCache<S>> {
    let n = input.rows();
    let m = edges.len();
    let in_dim = input.cols();
    let heads = config.num_heads;
    let dh = config.head_dim();
    let hidden = config.hidden_dim;
    let p = config.dropout;
    let use_dropout = dropout_on && p > 0.0;

    let (x, feat_mask) = if use_dropout {
        let mask = dropout_mask(n, in_dim, p, need_rng(&mut rng)?);
        let mut x = input.clone();
        x.mul_assign_matrix(&mask)?;
        (x, Some(mask))
    } else {
        (input.clone(), None)
    };

    let w_src = fused_weights(config, store, layer, name_w_src, in_dim);
    let w_dst = fused_weights(config, store, layer, name_w_dst, in_dim);
    let w_edge = fused_weights(config, store, layer, name_w_edge, config.relation_embed_dim);
    let attn = fused_attention(config, store, layer);

    let p_src = x.matmul(&w_src)?;
    let p_dst = x.matmul(&w_dst)?;
    let q = rel_feat.matmul(&w_edge)?;

    // Score pre-activation u = W_src h_s + W_dst h_t + W_edge f, per edge.
    let mut u = Matrix::zeros(m, hidden);
    for (e, edge) in edges.iter().enumerate() {
        let ps = p_src.row(edge.src);
        let pd = p_dst.row(edge.dst);
        let qe = q.row(e);
        let ur = u.row_mut(e);
        for j in 0..hidden {
            ur[j] = ps[j] + pd[j] + qe[j];
        }
    }

    // Per-head scores e = a · leaky_relu(u).
    let slope = S::of(ATTENTION_LEAKY_SLOPE);
    let mut scores = Matrix::zeros(m, heads);
    for e in 0..m {
        let ur = u.row(e);
        let sr = scores.row_mut(e);
        for (k, s) in sr.iter_mut().enumerate() {
            let mut acc = S::zero();
            for j in k * dh..(k + 1) * dh {
                let v = if ur[j] > S::zero() { ur[j] } else { slope * ur[j] };
                acc += v * attn[j];
            }
            *s = acc;
        }
    }

    // Softmax over incoming edges of each destination, per head.
    let segments: Vec<usize> = edges.iter().map(|e| e.dst).collect();
    let mut alpha = Matrix::zeros(m, heads);
    let mut col = vec![S::zero(); m];
    for k in 0..heads {
        for e in 0..m {
            col[e] = scores.get(e, k);
        }
        let w = segment_softmax(&col, &segments);
        for e in 0..m {
            alpha.set(e, k, w[e]);
        }
    }

    let (alpha_used, attn_mask) = if use_dropout {
        let mask = dropout_mask(m, heads, p, need_rng(&mut rng)?);
        let mut au = alpha.clone();
        au.mul_assign_matrix(&mask)?;
        (au, Some(mask))
    } else {
        (alpha.clone(), None)
    };

    // Message m = W_dst h_s + W_edge f.
    let mut msg = Matrix::zeros(m, hidden);
    for (e, edge) in edges.iter().enumerate() {
        let pd = p_dst.row(edge.src);
        let qe = q.row(e);
        let mr = msg.row_mut(e);
        for j in 0..hidden {
            mr[j] = pd[j] + qe[j];
        }
    }

    // Aggregate per destination; heads concatenated by construction.
    let mut out = Matrix::zeros(n, hidden);
    for (e, edge) in edges.iter().enumerate() {
        let mr = msg.row(e);
        let ar = alpha_used.row(e);
        let or = out.row_mut(edge.dst);
        for (k, &a) in ar.iter().enumerate() {
            for j in k * dh..(k + 1) * dh {
                or[j] += a * mr[j];
            }
        }
    }

    if out.first_nonfinite().is_some() {
        return Err(numeric_error(format!("gat layer {layer} output")));
    }

    Ok(LayerCache {
        x,
        feat_mask,
        u,
        msg,
        alpha,
        alpha_used,
        attn_mask,
        out_pre: out,
    })
}

/// Adds a (1 × cols) bias row to every row of `m`.
fn add_row_bias<S: Scalar>(m: &mut Matrix<S>, bias: &Matrix<S>) {
    debug_assert_eq!(bias.rows(), 1);
    debug_assert_eq!(bias.cols(), m.cols());
    let b = bias.row(0).to_vec();
    for i in 0..m.rows() {
        for (v, &bj) in m.row_mut(i).iter_mut().zip(&b) {
            *v += bj;
        }
    }
}

/// Attention-pooling read-out: score_i = gate · tanh(f_i) + bias, weights
/// softmaxed within each segment, pooled vector the weighted sum. Returns
/// (pooled per segment, node weights).
pub fn attention_pool<S: Scalar>(
    features: &Matrix<S>,
    gate: &Matrix<S>,
    bias: S,
    segments: &[usize],
) -> (Matrix<S>, Vec<S>) {
    let n = features.rows();
    let dim = features.cols();
    assert_eq!(gate.shape(), (dim, 1), "gate must be (feature_dim x 1)");
    assert_eq!(segments.len(), n, "one segment id per feature row");
    let tanh_f = tanh_elementwise(features);
    let mut scores = vec![S::zero(); n];
    for i in 0..n {
        let tr = tanh_f.row(i);
        let mut acc = bias;
        for j in 0..dim {
            acc += tr[j] * gate.data()[j];
        }
        scores[i] = acc;
    }
    let weights = segment_softmax(&scores, segments);
    let num_segments = segments.iter().copied().max().map_or(0, |s| s + 1);
    let mut pooled = Matrix::zeros(num_segments, dim);
    for i in 0..n {
        let w = weights[i];
        let fr = features.row(i);
        let pr = pooled.row_mut(segments[i]);
        for j in 0..dim {
            pr[j] += w * fr[j];
        }
    }
    (pooled, weights)
}

/// Full batched forward pass.
pub(crate) fn forward_batch<S: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<S>,
    batch: &GraphBatch,
    mode: Mode,
    mut rng: Option<&mut Pcg32>,
) -> Result<ForwardCache<S>> {
    if batch.num_graphs() == 0 {
        return Err(invalid_argument("empty batch"));
    }
    let dropout_on = mode == Mode::Train;
    let n = batch.total_nodes();
    let b = batch.num_graphs();
    let hidden = config.hidden_dim;

    let h0 = assemble_features_batch(config, store, batch);
    let rel_feat = gather_relation_features(config, store, &batch.edges);

    let mut layers: Vec<LayerCache<S>> = Vec::with_capacity(config.num_layers);
    let mut h = h0;
    for layer in 0..config.num_layers {
        let lc = layer_forward(
            config,
            store,
            layer,
            &h,
            &batch.edges,
            &rel_feat,
            dropout_on,
            rng.as_deref_mut(),
        )?;
        h = if layer + 1 < config.num_layers {
            elu(&lc.out_pre)
        } else {
            lc.out_pre.clone()
        };
        layers.push(lc);
    }

    // Attention pooling over per-graph segments.
    let gate = store.value("pool.gate");
    let bias = store.value("pool.bias").get(0, 0);
    let tanh_h = tanh_elementwise(&h);
    let mut pool_scores = vec![S::zero(); n];
    for i in 0..n {
        let tr = tanh_h.row(i);
        let mut acc = bias;
        for j in 0..hidden {
            acc += tr[j] * gate.data()[j];
        }
        pool_scores[i] = acc;
    }
    let pool_w = segment_softmax(&pool_scores, &batch.node_graph);
    let mut pooled = Matrix::zeros(b, hidden);
    for i in 0..n {
        let w = pool_w[i];
        let hr = h.row(i);
        let pr = pooled.row_mut(batch.node_graph[i]);
        for j in 0..hidden {
            pr[j] += w * hr[j];
        }
    }

    // MLP head: affine -> ReLU -> dropout -> affine.
    let mut z1 = pooled.matmul(store.value("head.mlp.0.weight"))?;
    add_row_bias(&mut z1, store.value("head.mlp.0.bias"));
    let a1 = relu(&z1);
    let (a1_used, mlp_mask) = if dropout_on && config.dropout > 0.0 {
        let mask = dropout_mask(b, config.mlp_hidden(), config.dropout, need_rng(&mut rng)?);
        let mut a = a1;
        a.mul_assign_matrix(&mask)?;
        (a, Some(mask))
    } else {
        (a1, None)
    };
    let mut logits = a1_used.matmul(store.value("head.mlp.1.weight"))?;
    add_row_bias(&mut logits, store.value("head.mlp.1.bias"));
    if logits.first_nonfinite().is_some() {
        return Err(numeric_error("logits"));
    }

    Ok(ForwardCache {
        rel_feat,
        layers,
        tanh_h,
        pool_w,
        pooled,
        z1,
        a1_used,
        mlp_mask,
        logits,
    })
}

/// One recorded message edge, in graph-local node ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordedEdge {
    pub src: usize,
    pub dst: usize,
    pub relation_index: usize,
    pub is_self_loop: bool,
}

/// Attention trace of one graph's forward pass: the raw material for
/// explanations.
#[derive(Clone, Debug)]
pub struct AttentionRecord<S> {
    /// Message edges (original order, then self-loops), local node ids.
    pub edges: Vec<RecordedEdge>,
    /// Per layer: (edges × heads) pre-dropout attention coefficients.
    pub attention: Vec<Matrix<S>>,
    /// Pooling weight per node; sums to 1.
    pub pooling_weights: Vec<S>,
    pub logits: Vec<S>,
    /// Argmax class (lowest index on ties).
    pub predicted: usize,
}

fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Splits a batched cache into per-graph attention records.
pub(crate) fn extract_records<S: Scalar>(
    batch: &GraphBatch,
    cache: &ForwardCache<S>,
) -> Vec<AttentionRecord<S>> {
    let mut records = Vec::with_capacity(batch.num_graphs());
    for g in 0..batch.num_graphs() {
        let nodes = batch.nodes_of(g);
        let edge_range = batch.edges_of(g);
        let base = nodes.start;
        let edges: Vec<RecordedEdge> = batch.edges[edge_range.clone()]
            .iter()
            .map(|e| RecordedEdge {
                src: e.src - base,
                dst: e.dst - base,
                relation_index: e.relation_index,
                is_self_loop: e.is_self_loop,
            })
            .collect();
        let attention: Vec<Matrix<S>> = cache
            .layers
            .iter()
            .map(|lc| {
                let mut m = Matrix::zeros(edge_range.len(), lc.alpha.cols());
                for (local, e) in edge_range.clone().enumerate() {
                    m.row_mut(local).copy_from_slice(lc.alpha.row(e));
                }
                m
            })
            .collect();
        let logits = cache.logits.row(g).to_vec();
        records.push(AttentionRecord {
            edges,
            attention,
            pooling_weights: cache.pool_w[nodes].to_vec(),
            predicted: argmax(&logits),
            logits,
        });
    }
    records
}
