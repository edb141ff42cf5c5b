//! Hand-written reverse-mode gradients for the batched forward pass.
//!
//! Gradients accumulate into the store's `grad` buffers (callers zero them
//! first). Loops mirror the forward pass edge-for-edge so the accumulation
//! order — and therefore the floating-point result — is deterministic.

use crate::error::Result;
use crate::numerics::{elu_backward, Matrix, ParameterStore};
use crate::scalar::Scalar;

use super::batch::GraphBatch;
use super::forward::{fused_attention, fused_weights, ForwardCache};
use super::params::{name_attn, name_w_dst, name_w_edge, name_w_src};
use super::{ModelConfig, ATTENTION_LEAKY_SLOPE};

/// Sums the rows of `m` into a (1 × cols) matrix.
fn column_sums<S: Scalar>(m: &Matrix<S>) -> Matrix<S> {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        let r = m.row(i);
        let o = out.row_mut(0);
        for j in 0..m.cols() {
            o[j] += r[j];
        }
    }
    out
}

/// Adds each head's slice of a fused (in × hidden) gradient into the
/// corresponding per-head parameter gradient.
fn scatter_fused_grad<S: Scalar>(
    store: &mut ParameterStore<S>,
    layer: usize,
    name: fn(usize, usize) -> String,
    d_fused: &Matrix<S>,
    dh: usize,
    heads: usize,
) {
    for head in 0..heads {
        let g = store.grad_mut(&name(layer, head));
        for r in 0..d_fused.rows() {
            let src = &d_fused.row(r)[head * dh..(head + 1) * dh];
            for (d, &s) in g.row_mut(r).iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Backpropagates `dlogits` through the cached forward pass, accumulating
/// parameter gradients in `store`.
pub(crate) fn backward_batch<S: Scalar>(
    config: &ModelConfig,
    store: &mut ParameterStore<S>,
    batch: &GraphBatch,
    cache: &ForwardCache<S>,
    dlogits: &Matrix<S>,
) -> Result<()> {
    let n = batch.total_nodes();
    let b = batch.num_graphs();
    let m = batch.edges.len();
    let heads = config.num_heads;
    let dh = config.head_dim();
    let hidden = config.hidden_dim;
    let slope = S::of(ATTENTION_LEAKY_SLOPE);

    // ----- MLP head -----
    let w2 = store.value("head.mlp.1.weight").clone();
    let dw2 = cache.a1_used.matmul_tn(dlogits)?;
    store.grad_mut("head.mlp.1.weight").add_assign_matrix(&dw2)?;
    store
        .grad_mut("head.mlp.1.bias")
        .add_assign_matrix(&column_sums(dlogits))?;

    let mut d_a1 = dlogits.matmul_nt(&w2)?;
    if let Some(mask) = &cache.mlp_mask {
        d_a1.mul_assign_matrix(mask)?;
    }
    for (g, &z) in d_a1.data_mut().iter_mut().zip(cache.z1.data()) {
        if z <= S::zero() {
            *g = S::zero();
        }
    }
    let dz1 = d_a1;

    let w1 = store.value("head.mlp.0.weight").clone();
    let dw1 = cache.pooled.matmul_tn(&dz1)?;
    store.grad_mut("head.mlp.0.weight").add_assign_matrix(&dw1)?;
    store
        .grad_mut("head.mlp.0.bias")
        .add_assign_matrix(&column_sums(&dz1))?;
    let d_pooled = dz1.matmul_nt(&w1)?;

    // ----- attention pooling -----
    let h_final = cache.h_final();
    let gate = store.value("pool.gate").clone();
    let mut d_h = Matrix::zeros(n, hidden);
    let mut d_w = vec![S::zero(); n];
    for i in 0..n {
        let dp = d_pooled.row(batch.node_graph[i]);
        let hr = h_final.row(i);
        let wi = cache.pool_w[i];
        let dr = d_h.row_mut(i);
        let mut dot = S::zero();
        for j in 0..hidden {
            dot += dp[j] * hr[j];
            dr[j] += wi * dp[j];
        }
        d_w[i] = dot;
    }
    // Softmax backward: ds_i = w_i (dw_i − Σ_j w_j dw_j) within each graph.
    let mut seg_dot = vec![S::zero(); b];
    for i in 0..n {
        seg_dot[batch.node_graph[i]] += cache.pool_w[i] * d_w[i];
    }
    let mut d_gate = vec![S::zero(); hidden];
    let mut d_bias = S::zero();
    for i in 0..n {
        let ds = cache.pool_w[i] * (d_w[i] - seg_dot[batch.node_graph[i]]);
        d_bias += ds;
        let tr = cache.tanh_h.row(i);
        let dr = d_h.row_mut(i);
        for j in 0..hidden {
            d_gate[j] += ds * tr[j];
            dr[j] += ds * gate.data()[j] * (S::one() - tr[j] * tr[j]);
        }
    }
    for (g, d) in store
        .grad_mut("pool.gate")
        .data_mut()
        .iter_mut()
        .zip(&d_gate)
    {
        *g += *d;
    }
    store.grad_mut("pool.bias").data_mut()[0] += d_bias;

    // ----- GAT layers, last to first -----
    let mut d_out = d_h;
    let mut d_rel = Matrix::zeros(m, config.relation_embed_dim);
    for layer in (0..config.num_layers).rev() {
        let lc = &cache.layers[layer];
        let in_dim = config.layer_input_dim(layer);

        // The inter-layer ELU sits between this layer's output and the next
        // layer's input; the last layer feeds pooling directly.
        if layer + 1 < config.num_layers {
            elu_backward(&mut d_out, &lc.out_pre);
        }

        // Aggregation backward: out[t] += alpha_used * msg per head slice.
        let mut d_alpha_used = Matrix::zeros(m, heads);
        let mut d_p_src = Matrix::zeros(n, hidden);
        let mut d_p_dst = Matrix::zeros(n, hidden);
        let mut d_q = Matrix::zeros(m, hidden);
        for (e, edge) in batch.edges.iter().enumerate() {
            let dor = d_out.row(edge.dst);
            let mr = lc.msg.row(e);
            let ar = lc.alpha_used.row(e);
            let dar = d_alpha_used.row_mut(e);
            let dpd = d_p_dst.row_mut(edge.src);
            let dqr = d_q.row_mut(e);
            for (k, &a) in ar.iter().enumerate() {
                let mut acc = S::zero();
                for j in k * dh..(k + 1) * dh {
                    acc += dor[j] * mr[j];
                    let t = a * dor[j];
                    dpd[j] += t;
                    dqr[j] += t;
                }
                dar[k] = acc;
            }
        }

        // Dropout backward onto pre-dropout attention.
        let mut d_alpha = d_alpha_used;
        if let Some(mask) = &lc.attn_mask {
            d_alpha.mul_assign_matrix(mask)?;
        }

        // Softmax backward per (destination, head).
        let mut seg = Matrix::zeros(n, heads);
        for (e, edge) in batch.edges.iter().enumerate() {
            let ar = lc.alpha.row(e);
            let dr = d_alpha.row(e);
            let sr = seg.row_mut(edge.dst);
            for k in 0..heads {
                sr[k] += ar[k] * dr[k];
            }
        }

        // Score backward through the leaky-relu gate and attention vectors.
        let attn = fused_attention(config, store, layer);
        let mut d_attn = vec![S::zero(); hidden];
        for (e, edge) in batch.edges.iter().enumerate() {
            let ar = lc.alpha.row(e);
            let dr = d_alpha.row(e);
            let sr = seg.row(edge.dst);
            let ur = lc.u.row(e);
            let dps = d_p_src.row_mut(edge.src);
            let dpd = d_p_dst.row_mut(edge.dst);
            let dqr = d_q.row_mut(e);
            for k in 0..heads {
                let dscore = ar[k] * (dr[k] - sr[k]);
                for j in k * dh..(k + 1) * dh {
                    let (v, g) = if ur[j] > S::zero() {
                        (ur[j], S::one())
                    } else {
                        (slope * ur[j], slope)
                    };
                    d_attn[j] += dscore * v;
                    let du = dscore * attn[j] * g;
                    dps[j] += du;
                    dpd[j] += du;
                    dqr[j] += du;
                }
            }
        }
        for head in 0..heads {
            let g = store.grad_mut(&name_attn(layer, head));
            for (j, gd) in g.data_mut().iter_mut().enumerate() {
                *gd += d_attn[head * dh + j];
            }
        }

        // Linear-map gradients and the pull-back onto this layer's input.
        let dw_src = lc.x.matmul_tn(&d_p_src)?;
        let dw_dst = lc.x.matmul_tn(&d_p_dst)?;
        let dw_edge = cache.rel_feat.matmul_tn(&d_q)?;
        scatter_fused_grad(store, layer, name_w_src, &dw_src, dh, heads);
        scatter_fused_grad(store, layer, name_w_dst, &dw_dst, dh, heads);
        scatter_fused_grad(store, layer, name_w_edge, &dw_edge, dh, heads);

        let w_src = fused_weights(config, store, layer, name_w_src, in_dim);
        let w_dst = fused_weights(config, store, layer, name_w_dst, in_dim);
        let w_edge = fused_weights(config, store, layer, name_w_edge, config.relation_embed_dim);
        let mut d_x = d_p_src.matmul_nt(&w_src)?;
        d_x.add_assign_matrix(&d_p_dst.matmul_nt(&w_dst)?)?;
        d_rel.add_assign_matrix(&d_q.matmul_nt(&w_edge)?)?;
        if let Some(mask) = &lc.feat_mask {
            d_x.mul_assign_matrix(mask)?;
        }
        d_out = d_x;
    }

    // ----- embedding tables -----
    let obj_dim = config.object_embed_dim;
    {
        let g = store.grad_mut("embed.object");
        for i in 0..n {
            let dr = d_out.row(i);
            let gr = g.row_mut(batch.node_labels[i]);
            for j in 0..obj_dim {
                gr[j] += dr[j];
            }
        }
    }
    {
        let g = store.grad_mut("embed.relation");
        for (e, edge) in batch.edges.iter().enumerate() {
            let dr = d_rel.row(e);
            let gr = g.row_mut(edge.relation_index);
            for j in 0..config.relation_embed_dim {
                gr[j] += dr[j];
            }
        }
    }
    Ok(())
}
