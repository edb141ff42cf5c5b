//! Scene-graph domain model: vocabularies, nodes, edges, class labels,
//! validation.
//!
//! A scene graph describes one image as detected objects (nodes, each with a
//! normalized bounding box) and predicate relations between them (directed
//! edges), expressed as (subject, predicate, object) triplets. Object and
//! predicate labels live in a closed vocabulary — by default the standard
//! VG150 lists of 150 objects and 50 relations shipped with this crate —
//! with reserved `[unk_obj]` / `[unk_rel]` tokens absorbing anything outside
//! it and a reserved `[self_loop]` relation used internally by message
//! passing.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid_argument, Error, Result};

/// Reserved object token for out-of-vocabulary labels.
pub const UNK_OBJECT_TOKEN: &str = "[unk_obj]";
/// Reserved relation token for out-of-vocabulary predicates.
pub const UNK_RELATION_TOKEN: &str = "[unk_rel]";
/// Reserved relation token carried by inserted self-loop edges.
pub const SELF_LOOP_TOKEN: &str = "[self_loop]";

const VG150_OBJECTS: &str = include_str!("../data/vg150_objects.txt");
const VG150_RELATIONS: &str = include_str!("../data/vg150_relations.txt");

/// Closed label vocabulary for objects and relations.
///
/// Real labels come first, in file order; reserved tokens are appended by
/// the constructor and are never present in vocabulary files. Lookups
/// normalize case and whitespace and fold unknown labels (including the
/// reserved tokens' literal spellings) to the unk indices, so they are total
/// and never produce the self-loop index.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    object_labels: Vec<String>,
    relation_labels: Vec<String>,
    object_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    object_hash: String,
    relation_hash: String,
}

/// Lowercases, trims, and collapses internal whitespace runs to one space.
fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn content_hash(labels: &[String]) -> String {
    let mut hasher = Sha256::new();
    for label in labels {
        hasher.update(label.as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_label_list(text: &str, what: &str) -> Result<Vec<String>> {
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let label = normalize_label(raw);
        if label.is_empty() {
            continue;
        }
        if label.starts_with('[') {
            return Err(invalid_argument(format!(
                "{what} list line {}: `{label}` collides with reserved token syntax",
                i + 1
            )));
        }
        if !seen.insert(label.clone()) {
            return Err(invalid_argument(format!(
                "{what} list line {}: duplicate label `{label}`",
                i + 1
            )));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(invalid_argument(format!("{what} list is empty")));
    }
    Ok(labels)
}

impl Vocabulary {
    /// Builds a vocabulary from real label lists; reserved tokens are
    /// appended here.
    pub fn from_label_lists(objects: Vec<String>, relations: Vec<String>) -> Result<Self> {
        let objects: Vec<String> = objects.iter().map(|s| normalize_label(s)).collect();
        let relations: Vec<String> = relations.iter().map(|s| normalize_label(s)).collect();
        let mut object_index = HashMap::new();
        for (i, l) in objects.iter().enumerate() {
            if object_index.insert(l.clone(), i).is_some() {
                return Err(invalid_argument(format!("duplicate object label `{l}`")));
            }
        }
        let mut relation_index = HashMap::new();
        for (i, l) in relations.iter().enumerate() {
            if relation_index.insert(l.clone(), i).is_some() {
                return Err(invalid_argument(format!("duplicate relation label `{l}`")));
            }
        }
        let object_hash = content_hash(&objects);
        let relation_hash = content_hash(&relations);
        let mut object_labels = objects;
        object_labels.push(UNK_OBJECT_TOKEN.to_string());
        let mut relation_labels = relations;
        relation_labels.push(UNK_RELATION_TOKEN.to_string());
        relation_labels.push(SELF_LOOP_TOKEN.to_string());
        Ok(Vocabulary {
            object_labels,
            relation_labels,
            object_index,
            relation_index,
            object_hash,
            relation_hash,
        })
    }

    /// The VG150 vocabulary shipped with the crate: 150 objects, 50
    /// relations.
    pub fn vg150() -> Self {
        let objects = parse_label_list(VG150_OBJECTS, "object").expect("bundled object list");
        let relations =
            parse_label_list(VG150_RELATIONS, "relation").expect("bundled relation list");
        Vocabulary::from_label_lists(objects, relations).expect("bundled vocabulary")
    }

    /// Loads label lists from UTF-8 text files, one label per line, in index
    /// order. Reserved tokens must not appear in the files.
    pub fn from_files(objects_path: &Path, relations_path: &Path) -> Result<Self> {
        let read = |p: &Path| -> Result<String> {
            std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))
        };
        let objects = parse_label_list(&read(objects_path)?, "object")?;
        let relations = parse_label_list(&read(relations_path)?, "relation")?;
        Vocabulary::from_label_lists(objects, relations)
    }

    /// Object table size including the reserved token.
    pub fn num_object_labels(&self) -> usize {
        self.object_labels.len()
    }

    /// Relation table size including both reserved tokens.
    pub fn num_relation_labels(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn unk_object_index(&self) -> usize {
        self.object_labels.len() - 1
    }

    pub fn unk_relation_index(&self) -> usize {
        self.relation_labels.len() - 2
    }

    pub fn self_loop_index(&self) -> usize {
        self.relation_labels.len() - 1
    }

    /// Index of an object label; unknown labels fold to `[unk_obj]`.
    pub fn lookup_object(&self, label: &str) -> usize {
        self.object_index
            .get(&normalize_label(label))
            .copied()
            .unwrap_or_else(|| self.unk_object_index())
    }

    /// Index of a relation label; unknown labels fold to `[unk_rel]`.
    /// Never returns the self-loop index.
    pub fn lookup_relation(&self, label: &str) -> usize {
        self.relation_index
            .get(&normalize_label(label))
            .copied()
            .unwrap_or_else(|| self.unk_relation_index())
    }

    /// Label string at an object index (reserved tokens included).
    pub fn object_label(&self, index: usize) -> &str {
        &self.object_labels[index]
    }

    /// Label string at a relation index (reserved tokens included).
    pub fn relation_label(&self, index: usize) -> &str {
        &self.relation_labels[index]
    }

    /// SHA-256 hex digest of the real object labels (newline-terminated).
    pub fn object_hash(&self) -> &str {
        &self.object_hash
    }

    /// SHA-256 hex digest of the real relation labels.
    pub fn relation_hash(&self) -> &str {
        &self.relation_hash
    }
}

/// Ordered set of class names the classifier chooses between.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassLabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassLabelSet {
    /// Builds a class set; needs at least two unique names.
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(invalid_argument("a class set needs at least 2 classes"));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(invalid_argument("empty class name"));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(invalid_argument(format!("duplicate class name `{n}`")));
            }
        }
        Ok(ClassLabelSet { names, index })
    }

    /// The eight indoor-scene categories used by the bundled demo configs.
    pub fn places8() -> Self {
        ClassLabelSet::new(
            [
                "bathroom",
                "bedroom",
                "child's room",
                "classroom",
                "dressing room",
                "living room",
                "studio",
                "swimming pool",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
        .expect("built-in class set")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name.trim()).copied()
    }
}

/// One detected object: a node of the scene graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectNode {
    /// Unique within the graph; 0..n-1 after validation.
    pub node_id: usize,
    /// Index into the object vocabulary.
    pub label_index: usize,
    /// (x1, y1, x2, y2), normalized to [0, 1] with x1 <= x2, y1 <= y2.
    pub bbox: [f64; 4],
    /// Detector confidence in [0, 1].
    pub confidence: f64,
}

/// One (subject, predicate, object) triplet: a directed edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationEdge {
    pub subject_id: usize,
    /// Index into the relation vocabulary.
    pub predicate_index: usize,
    pub object_id: usize,
    /// Detector confidence in [0, 1].
    pub confidence: f64,
}

/// A validated-or-raw scene graph for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub graph_id: String,
    pub nodes: Vec<ObjectNode>,
    pub edges: Vec<RelationEdge>,
    /// Class index; absent at predict time.
    pub label: Option<usize>,
    /// Optional content-category tag for per-subset reporting.
    pub subset_tag: Option<String>,
}

/// Converts a pixel-space box to normalized coordinates: corners are swapped
/// into x1 <= x2, y1 <= y2 order, divided by the image dimensions, and
/// clamped to [0, 1].
pub fn normalize_bbox(bbox_px: [f64; 4], width: u32, height: u32) -> Result<[f64; 4]> {
    if width == 0 || height == 0 {
        return Err(invalid_argument("image dimensions must be positive"));
    }
    if bbox_px.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::schema_error(format!(
            "non-finite bounding box {bbox_px:?}"
        )));
    }
    let [mut x1, mut y1, mut x2, mut y2] = bbox_px;
    if x1 > x2 {
        std::mem::swap(&mut x1, &mut x2);
    }
    if y1 > y2 {
        std::mem::swap(&mut y1, &mut y2);
    }
    let w = f64::from(width);
    let h = f64::from(height);
    Ok([
        (x1 / w).clamp(0.0, 1.0),
        (y1 / h).clamp(0.0, 1.0),
        (x2 / w).clamp(0.0, 1.0),
        (y2 / h).clamp(0.0, 1.0),
    ])
}

/// Validates and canonicalizes a graph.
///
/// Node ids are compacted to 0..n-1 in input order and edges remapped;
/// duplicate (subject, predicate, object) triplets collapse to their first
/// occurrence keeping the maximum confidence; bounding-box corner disorder
/// is repaired and coordinates/confidences are clamped into [0, 1].
/// Idempotent: validating a validated graph returns it unchanged.
///
/// Errors on an empty graph, duplicate node ids, dangling edge endpoints,
/// or non-finite numeric fields.
pub fn validate_graph(raw: &SceneGraph) -> Result<SceneGraph> {
    let gid = &raw.graph_id;
    let graph_err = |message: String| Error::Graph {
        graph_id: gid.clone(),
        message,
    };
    if raw.nodes.is_empty() {
        return Err(graph_err("empty graph".to_string()));
    }

    let mut id_map = HashMap::with_capacity(raw.nodes.len());
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (new_id, node) in raw.nodes.iter().enumerate() {
        if id_map.insert(node.node_id, new_id).is_some() {
            return Err(graph_err(format!("duplicate node id {}", node.node_id)));
        }
        if node.bbox.iter().any(|v| !v.is_finite()) {
            return Err(graph_err(format!(
                "non-finite bbox on node {}",
                node.node_id
            )));
        }
        if !node.confidence.is_finite() {
            return Err(graph_err(format!(
                "non-finite confidence on node {}",
                node.node_id
            )));
        }
        let [mut x1, mut y1, mut x2, mut y2] = node.bbox;
        if x1 > x2 {
            std::mem::swap(&mut x1, &mut x2);
        }
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
        }
        nodes.push(ObjectNode {
            node_id: new_id,
            label_index: node.label_index,
            bbox: [
                x1.clamp(0.0, 1.0),
                y1.clamp(0.0, 1.0),
                x2.clamp(0.0, 1.0),
                y2.clamp(0.0, 1.0),
            ],
            confidence: node.confidence.clamp(0.0, 1.0),
        });
    }

    let mut edges: Vec<RelationEdge> = Vec::with_capacity(raw.edges.len());
    let mut triplet_at: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for edge in &raw.edges {
        if !edge.confidence.is_finite() {
            return Err(graph_err(format!(
                "non-finite confidence on edge {} -> {}",
                edge.subject_id, edge.object_id
            )));
        }
        let (Some(&s), Some(&o)) = (id_map.get(&edge.subject_id), id_map.get(&edge.object_id))
        else {
            return Err(graph_err(format!(
                "dangling reference: edge {} -> {} names a missing node",
                edge.subject_id, edge.object_id
            )));
        };
        let confidence = edge.confidence.clamp(0.0, 1.0);
        let key = (s, edge.predicate_index, o);
        match triplet_at.get(&key) {
            Some(&at) => {
                if confidence > edges[at].confidence {
                    edges[at].confidence = confidence;
                }
            }
            None => {
                triplet_at.insert(key, edges.len());
                edges.push(RelationEdge {
                    subject_id: s,
                    predicate_index: edge.predicate_index,
                    object_id: o,
                    confidence,
                });
            }
        }
    }

    Ok(SceneGraph {
        graph_id: raw.graph_id.clone(),
        nodes,
        edges,
        label: raw.label,
        subset_tag: raw.subset_tag.clone(),
    })
}
