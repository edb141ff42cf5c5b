//! Attention-based explainability.
//!
//! The forward pass already computes everything an explanation needs: the
//! pooling weight of every node and the per-head attention on every edge.
//! This module resolves those numbers back to vocabulary labels, producing
//! per-image attribution reports and corpus-level class importance tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid_argument, Result};
use crate::graph::{ClassLabelSet, SceneGraph, Vocabulary};
use crate::model::{
    extract_records, forward_batch, self_loop_relation, AttentionRecord, GraphBatch, Mode,
    ModelConfig,
};
use crate::numerics::ParameterStore;
use crate::scalar::Scalar;

/// One node's contribution to a prediction.
#[derive(Clone, Debug, Serialize)]
pub struct NodeAttribution {
    pub node_id: usize,
    pub label: String,
    /// Pooling weight; all nodes of a graph sum to 1.
    pub importance: f64,
}

/// One relation edge's contribution to a prediction.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeAttribution {
    pub subject_id: usize,
    pub object_id: usize,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    /// Attention weight in (0, 1].
    pub importance: f64,
}

/// Per-image attribution: which objects and relations drove the prediction.
#[derive(Clone, Debug, Serialize)]
pub struct AttributionReport {
    pub graph_id: String,
    pub predicted_class: String,
    pub true_class: Option<String>,
    /// Nodes by descending importance.
    pub nodes: Vec<NodeAttribution>,
    /// Edges by descending importance (self-loops excluded).
    pub edges: Vec<EdgeAttribution>,
}

/// Builds the attribution report for one graph from its forward-pass record.
/// Node importance is the pooling weight; edge importance is the head-mean
/// final-layer attention on the edge. Self-loop entries are dropped from the
/// report.
pub fn per_image_attribution<S: Scalar>(
    record: &AttentionRecord<S>,
    graph: &SceneGraph,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
) -> Result<AttributionReport> {
    if record.pooling_weights.len() != graph.nodes.len() {
        return Err(invalid_argument(format!(
            "record has {} nodes but graph `{}` has {}",
            record.pooling_weights.len(),
            graph.graph_id,
            graph.nodes.len()
        )));
    }
    let real_edges = record.edges.iter().filter(|e| !e.is_self_loop).count();
    if real_edges != graph.edges.len() {
        return Err(invalid_argument(format!(
            "record has {} edges but graph `{}` has {}",
            real_edges,
            graph.graph_id,
            graph.edges.len()
        )));
    }

    let mut nodes: Vec<NodeAttribution> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| NodeAttribution {
            node_id: node.node_id,
            label: vocab.object_label(node.label_index).to_string(),
            importance: record.pooling_weights[i].as_f64(),
        })
        .collect();
    nodes.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap()
            .then(a.node_id.cmp(&b.node_id))
    });

    let final_layer = record.attention.last().ok_or_else(|| {
        invalid_argument("record carries no attention layers")
    })?;
    let heads = final_layer.cols();
    let mut edges: Vec<EdgeAttribution> = Vec::with_capacity(graph.edges.len());
    for (e, re) in record.edges.iter().enumerate() {
        if re.is_self_loop {
            continue;
        }
        let row = final_layer.row(e);
        let mean: f64 = row.iter().map(|&a| a.as_f64()).sum::<f64>() / heads as f64;
        let subject = &graph.nodes[re.src];
        let object = &graph.nodes[re.dst];
        edges.push(EdgeAttribution {
            subject_id: subject.node_id,
            object_id: object.node_id,
            subject: vocab.object_label(subject.label_index).to_string(),
            predicate: vocab.relation_label(re.relation_index).to_string(),
            object: vocab.object_label(object.label_index).to_string(),
            importance: mean,
        });
    }
    edges.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap()
            .then(a.subject_id.cmp(&b.subject_id))
            .then(a.object_id.cmp(&b.object_id))
    });

    Ok(AttributionReport {
        graph_id: graph.graph_id.clone(),
        predicted_class: classes.name(record.predicted).to_string(),
        true_class: graph.label.map(|l| classes.name(l).to_string()),
        nodes,
        edges,
    })
}

/// One accumulated importance row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub label: String,
    pub score: f64,
    /// Number of node/edge instances that contributed.
    pub support: u64,
}

/// Accumulated importances of one class.
#[derive(Clone, Debug, Serialize)]
pub struct ClassImportance {
    pub class: String,
    /// Object labels ranked by score (ties broken lexicographically).
    pub objects: Vec<ImportanceRow>,
    /// Relation labels, same ranking.
    pub relations: Vec<ImportanceRow>,
}

/// Corpus-level importance tables, one entry per class.
#[derive(Clone, Debug, Serialize)]
pub struct ClassImportanceTable {
    pub classes: Vec<ClassImportance>,
}

/// Knobs for [`aggregate_importance`].
#[derive(Clone, Debug)]
pub struct AggregationOptions {
    /// Accumulate only correctly classified graphs (the default).
    pub only_correct: bool,
    /// Attention layer feeding edge scores; `None` means the final layer.
    pub layer: Option<usize>,
    /// Single head instead of the head mean.
    pub head: Option<usize>,
    /// Divide each class's accumulators by its contributing-image count.
    pub per_image_mean: bool,
    /// Forward-pass chunk size.
    pub batch_size: usize,
}

impl Default for AggregationOptions {
    fn default() -> Self {
        AggregationOptions {
            only_correct: true,
            layer: None,
            head: None,
            per_image_mean: false,
            batch_size: 8,
        }
    }
}

fn rank(acc: BTreeMap<String, (f64, u64)>, divisor: f64) -> Vec<ImportanceRow> {
    let mut rows: Vec<ImportanceRow> = acc
        .into_iter()
        .map(|(label, (score, support))| ImportanceRow {
            label,
            score: score / divisor,
            support,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.label.cmp(&b.label))
    });
    rows
}

/// Runs an eval-mode forward pass over `graphs` and accumulates node
/// importance per object label and edge importance per predicate label,
/// grouped by the true class of (by default, only) correctly classified
/// graphs.
pub fn aggregate_importance<S: Scalar>(
    graphs: &[&SceneGraph],
    config: &ModelConfig,
    store: &ParameterStore<S>,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
    options: &AggregationOptions,
) -> Result<ClassImportanceTable> {
    let layer = options.layer.unwrap_or(config.num_layers - 1);
    if layer >= config.num_layers {
        return Err(invalid_argument(format!(
            "layer {layer} out of range: model has {} layers",
            config.num_layers
        )));
    }
    if let Some(h) = options.head {
        if h >= config.num_heads {
            return Err(invalid_argument(format!(
                "head {h} out of range: model has {} heads",
                config.num_heads
            )));
        }
    }

    let mut objects: Vec<BTreeMap<String, (f64, u64)>> =
        vec![BTreeMap::new(); classes.len()];
    let mut relations: Vec<BTreeMap<String, (f64, u64)>> =
        vec![BTreeMap::new(); classes.len()];
    let mut images_per_class = vec![0u64; classes.len()];
    let mut skipped_unlabelled = 0usize;

    for chunk in graphs.chunks(options.batch_size.max(1)) {
        let batch = GraphBatch::build(chunk, self_loop_relation(config));
        let cache = forward_batch(config, store, &batch, Mode::Eval, None)?;
        let records = extract_records(&batch, &cache);
        for (graph, record) in chunk.iter().zip(&records) {
            let Some(true_class) = graph.label else {
                skipped_unlabelled += 1;
                continue;
            };
            if options.only_correct && record.predicted != true_class {
                continue;
            }
            images_per_class[true_class] += 1;
            for (i, node) in graph.nodes.iter().enumerate() {
                let label = vocab.object_label(node.label_index);
                let entry = objects[true_class]
                    .entry(label.to_string())
                    .or_insert((0.0, 0));
                entry.0 += record.pooling_weights[i].as_f64();
                entry.1 += 1;
            }
            let attention = &record.attention[layer];
            for (e, re) in record.edges.iter().enumerate() {
                if re.is_self_loop {
                    continue;
                }
                let score = match options.head {
                    Some(h) => attention.get(e, h).as_f64(),
                    None => {
                        attention.row(e).iter().map(|&a| a.as_f64()).sum::<f64>()
                            / attention.cols() as f64
                    }
                };
                let label = vocab.relation_label(re.relation_index);
                let entry = relations[true_class]
                    .entry(label.to_string())
                    .or_insert((0.0, 0));
                entry.0 += score;
                entry.1 += 1;
            }
        }
    }
    if skipped_unlabelled > 0 {
        log::warn!("aggregation skipped {skipped_unlabelled} unlabelled graph(s)");
    }

    let mut out = Vec::with_capacity(classes.len());
    for c in 0..classes.len() {
        if images_per_class[c] == 0 {
            log::warn!(
                "class `{}` has no contributing graphs; its table rows are empty",
                classes.name(c)
            );
        }
        let divisor = if options.per_image_mean && images_per_class[c] > 0 {
            images_per_class[c] as f64
        } else {
            1.0
        };
        out.push(ClassImportance {
            class: classes.name(c).to_string(),
            objects: rank(std::mem::take(&mut objects[c]), divisor),
            relations: rank(std::mem::take(&mut relations[c]), divisor),
        });
    }
    Ok(ClassImportanceTable { classes: out })
}

/// Renders the top-K slices of an importance table as a plain-text table and
/// a JSON document (entries `{label, score, support}` per class).
pub fn render_tables(
    table: &ClassImportanceTable,
    top_objects: usize,
    top_relations: usize,
) -> (String, serde_json::Value) {
    let mut text = String::new();
    let mut json_classes = Vec::new();
    for class in &table.classes {
        let objects: Vec<&ImportanceRow> = class.objects.iter().take(top_objects).collect();
        let relations: Vec<&ImportanceRow> =
            class.relations.iter().take(top_relations).collect();
        let _ = writeln!(text, "class: {}", class.class);
        let _ = writeln!(text, "  top objects:");
        for row in &objects {
            let _ = writeln!(
                text,
                "    {:<24} {:>10.4}  (n={})",
                row.label, row.score, row.support
            );
        }
        let _ = writeln!(text, "  top relations:");
        for row in &relations {
            let _ = writeln!(
                text,
                "    {:<24} {:>10.4}  (n={})",
                row.label, row.score, row.support
            );
        }
        let _ = writeln!(text);
        json_classes.push(serde_json::json!({
            "class": class.class,
            "objects": objects,
            "relations": relations,
        }));
    }
    (text, serde_json::Value::Array(json_classes))
}
