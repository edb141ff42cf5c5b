//! Message-graph construction and graph batching.
//!
//! A batch is the disjoint union of its graphs: node ids are shifted into
//! one global index space, per-node segment ids keep pooling separate per
//! graph, and attention segments are destination nodes — so no information
//! crosses graph boundaries by construction.

use std::ops::Range;

use crate::graph::SceneGraph;

/// One directed edge of the message graph. Messages flow subject → object;
/// every node additionally receives a self-loop carrying the reserved
/// self-loop relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageEdge {
    pub src: usize,
    pub dst: usize,
    pub relation_index: usize,
    pub is_self_loop: bool,
}

/// Message edges for one validated graph: original edges in input order,
/// then one self-loop per node in node-id order.
pub fn build_message_graph(g: &SceneGraph, self_loop_index: usize) -> Vec<MessageEdge> {
    let mut edges = Vec::with_capacity(g.edges.len() + g.nodes.len());
    for e in &g.edges {
        edges.push(MessageEdge {
            src: e.subject_id,
            dst: e.object_id,
            relation_index: e.predicate_index,
            is_self_loop: false,
        });
    }
    for n in &g.nodes {
        edges.push(MessageEdge {
            src: n.node_id,
            dst: n.node_id,
            relation_index: self_loop_index,
            is_self_loop: true,
        });
    }
    edges
}

/// Disjoint union of validated graphs, ready for a batched forward pass.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    /// Node index ranges per graph; len = num_graphs + 1.
    node_offsets: Vec<usize>,
    /// Message-edge index ranges per graph; len = num_graphs + 1.
    edge_offsets: Vec<usize>,
    /// Graph id (segment) per global node.
    pub node_graph: Vec<usize>,
    /// Object label index per global node.
    pub node_labels: Vec<usize>,
    /// Normalized bbox per global node.
    pub node_bboxes: Vec<[f64; 4]>,
    /// All message edges, endpoints in global node ids.
    pub edges: Vec<MessageEdge>,
    /// Class label per graph (None at predict time).
    pub labels: Vec<Option<usize>>,
    pub graph_ids: Vec<String>,
}

impl GraphBatch {
    /// Builds the union; graphs must already be validated.
    pub fn build(graphs: &[&SceneGraph], self_loop_index: usize) -> GraphBatch {
        let mut batch = GraphBatch {
            node_offsets: vec![0],
            edge_offsets: vec![0],
            node_graph: Vec::new(),
            node_labels: Vec::new(),
            node_bboxes: Vec::new(),
            edges: Vec::new(),
            labels: Vec::new(),
            graph_ids: Vec::new(),
        };
        for (gi, g) in graphs.iter().enumerate() {
            let base = *batch.node_offsets.last().unwrap();
            for n in &g.nodes {
                batch.node_graph.push(gi);
                batch.node_labels.push(n.label_index);
                batch.node_bboxes.push(n.bbox);
            }
            for e in build_message_graph(g, self_loop_index) {
                batch.edges.push(MessageEdge {
                    src: base + e.src,
                    dst: base + e.dst,
                    ..e
                });
            }
            batch.node_offsets.push(base + g.nodes.len());
            batch.edge_offsets.push(batch.edges.len());
            batch.labels.push(g.label);
            batch.graph_ids.push(g.graph_id.clone());
        }
        batch
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_ids.len()
    }

    pub fn total_nodes(&self) -> usize {
        self.node_graph.len()
    }

    pub fn total_edges(&self) -> usize {
        self.edges.len()
    }

    /// Global node index range of graph `g`.
    pub fn nodes_of(&self, g: usize) -> Range<usize> {
        self.node_offsets[g]..self.node_offsets[g + 1]
    }

    /// Message-edge index range of graph `g`.
    pub fn edges_of(&self, g: usize) -> Range<usize> {
        self.edge_offsets[g]..self.edge_offsets[g + 1]
    }

    /// Class labels of all graphs; errors if any graph is unlabeled.
    pub fn required_labels(&self) -> crate::Result<Vec<usize>> {
        self.labels
            .iter()
            .zip(&self.graph_ids)
            .map(|(l, id)| {
                l.ok_or_else(|| crate::error::invalid_argument(format!("graph `{id}` is unlabeled")))
            })
            .collect()
    }
}
