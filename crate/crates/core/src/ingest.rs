//! Dataset ingestion: the JSONL interchange format, splits, confidence
//! filtering, and stratified k-fold plans.
//!
//! The interchange format carries exactly what an upstream scene-graph
//! generator can export without images: one JSON object per line with
//! pixel-space boxes and string labels. Parsing resolves labels through the
//! vocabulary (unknowns fold to the unk tokens), normalizes boxes by the
//! record's image dimensions, and validates the graph, so everything past
//! this module works with clean, index-resolved [`SceneGraph`]s.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, schema_error, Error, Result};
use crate::graph::{
    normalize_bbox, validate_graph, ClassLabelSet, ObjectNode, RelationEdge, SceneGraph,
    Vocabulary,
};
use crate::rng::{Pcg32, StreamId};

fn default_score() -> f64 {
    1.0
}

#[derive(Deserialize, Serialize)]
struct RawObject {
    id: i64,
    label: String,
    bbox: [f64; 4],
    #[serde(default = "default_score")]
    score: f64,
}

#[derive(Deserialize, Serialize)]
struct RawRelation {
    subj: i64,
    pred: String,
    obj: i64,
    #[serde(default = "default_score")]
    score: f64,
}

#[derive(Deserialize, Serialize)]
struct RawGraph {
    graph_id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    subset: Option<String>,
    width: u32,
    height: u32,
    objects: Vec<RawObject>,
    relations: Vec<RawRelation>,
}

/// Parses one JSONL record into a validated [`SceneGraph`].
///
/// Object and predicate strings resolve through the vocabulary (unknowns
/// fold to unk); the class label must exist in `classes`; boxes are
/// normalized by the record's width/height.
pub fn parse_graph_record(
    line: &str,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
) -> Result<SceneGraph> {
    let raw: RawGraph = serde_json::from_str(line).map_err(|e| {
        if e.classify() == serde_json::error::Category::Data {
            schema_error(e.to_string())
        } else {
            Error::Parse {
                line: 0,
                message: e.to_string(),
            }
        }
    })?;
    if raw.graph_id.is_empty() {
        return Err(schema_error("empty graph_id"));
    }
    if raw.width == 0 || raw.height == 0 {
        return Err(schema_error(format!(
            "graph `{}`: width and height must be positive",
            raw.graph_id
        )));
    }
    let label = match &raw.label {
        None => None,
        Some(name) => Some(classes.index_of(name).ok_or_else(|| Error::UnknownClass {
            label: name.clone(),
        })?),
    };
    let mut nodes = Vec::with_capacity(raw.objects.len());
    for obj in &raw.objects {
        if obj.id < 0 {
            return Err(schema_error(format!(
                "graph `{}`: negative object id {}",
                raw.graph_id, obj.id
            )));
        }
        if !obj.score.is_finite() {
            return Err(schema_error(format!(
                "graph `{}`: non-finite object score",
                raw.graph_id
            )));
        }
        nodes.push(ObjectNode {
            node_id: obj.id as usize,
            label_index: vocab.lookup_object(&obj.label),
            bbox: normalize_bbox(obj.bbox, raw.width, raw.height)?,
            confidence: obj.score,
        });
    }
    let mut edges = Vec::with_capacity(raw.relations.len());
    for rel in &raw.relations {
        if rel.subj < 0 || rel.obj < 0 {
            return Err(schema_error(format!(
                "graph `{}`: negative relation endpoint",
                raw.graph_id
            )));
        }
        if !rel.score.is_finite() {
            return Err(schema_error(format!(
                "graph `{}`: non-finite relation score",
                raw.graph_id
            )));
        }
        edges.push(RelationEdge {
            subject_id: rel.subj as usize,
            predicate_index: vocab.lookup_relation(&rel.pred),
            object_id: rel.obj as usize,
            confidence: rel.score,
        });
    }
    validate_graph(&SceneGraph {
        graph_id: raw.graph_id,
        nodes,
        edges,
        label,
        subset_tag: raw.subset,
    })
}

/// Renders a validated graph back to one JSONL line.
///
/// Boxes are already normalized, so the record uses unit image dimensions;
/// labels are resolved back through the vocabulary (unk tokens serialize as
/// their literal spellings and fold back to unk on re-parse).
pub fn serialize_graph(
    g: &SceneGraph,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
) -> Result<String> {
    let raw = RawGraph {
        graph_id: g.graph_id.clone(),
        label: g.label.map(|i| classes.name(i).to_string()),
        subset: g.subset_tag.clone(),
        width: 1,
        height: 1,
        objects: g
            .nodes
            .iter()
            .map(|n| RawObject {
                id: n.node_id as i64,
                label: vocab.object_label(n.label_index).to_string(),
                bbox: n.bbox,
                score: n.confidence,
            })
            .collect(),
        relations: g
            .edges
            .iter()
            .map(|e| RawRelation {
                subj: e.subject_id as i64,
                pred: vocab.relation_label(e.predicate_index).to_string(),
                obj: e.object_id as i64,
                score: e.confidence,
            })
            .collect(),
    };
    serde_json::to_string(&raw).map_err(|e| schema_error(e.to_string()))
}

/// A loaded dataset: validated graphs plus the class set they are labeled
/// against.
#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub graphs: Vec<SceneGraph>,
    pub class_set: ClassLabelSet,
    pub source: String,
    /// Lines skipped by lenient loading.
    pub skipped_lines: usize,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Graphs selected by manifest index, cloned.
    pub fn select(&self, indices: &[usize]) -> Vec<SceneGraph> {
        indices.iter().map(|&i| self.graphs[i].clone()).collect()
    }

    /// Labeled-example count per class.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_set.len()];
        for g in &self.graphs {
            if let Some(l) = g.label {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Loads a JSONL dataset.
///
/// In strict mode the first bad line aborts the load with its line number;
/// in lenient mode bad lines are skipped and counted (reported via the
/// manifest and a warning log). Blank lines are ignored. Graph ids must be
/// unique.
pub fn load_manifest(
    path: &Path,
    vocab: &Vocabulary,
    classes: &ClassLabelSet,
    strict: bool,
) -> Result<DatasetManifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut graphs = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut skipped = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        match parse_graph_record(line, vocab, classes) {
            Ok(g) => {
                if !seen_ids.insert(g.graph_id.clone()) {
                    return Err(schema_error(format!(
                        "line {line_no}: duplicate graph_id `{}`",
                        g.graph_id
                    )));
                }
                graphs.push(g);
            }
            Err(e) if strict => {
                return Err(match e {
                    Error::Parse { message, .. } => Error::Parse {
                        line: line_no,
                        message,
                    },
                    Error::Schema { message } => schema_error(format!("line {line_no}: {message}")),
                    other => other,
                });
            }
            Err(e) => {
                log::warn!("skipping line {line_no} of {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} line(s) skipped while loading {}", path.display());
    }
    log::info!("loaded {} graphs from {}", graphs.len(), path.display());
    Ok(DatasetManifest {
        graphs,
        class_set: classes.clone(),
        source: path.display().to_string(),
        skipped_lines: skipped,
    })
}

/// Named dataset split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(invalid_argument(format!(
                "unknown split `{other}` (expected train, val, or test)"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Assignment of graph ids to train/val/test splits.
#[derive(Clone, Debug, Default)]
pub struct SplitAssignment {
    by_id: HashMap<String, Split>,
}

#[derive(Deserialize, Serialize, Default)]
struct RawSplits {
    #[serde(default)]
    train: Vec<String>,
    #[serde(default)]
    val: Vec<String>,
    #[serde(default)]
    test: Vec<String>,
}

impl SplitAssignment {
    /// Builds from id lists; an id in more than one split is an error.
    pub fn new(train: Vec<String>, val: Vec<String>, test: Vec<String>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (split, ids) in [
            (Split::Train, train),
            (Split::Val, val),
            (Split::Test, test),
        ] {
            for id in ids {
                if by_id.insert(id.clone(), split).is_some() {
                    return Err(schema_error(format!(
                        "graph_id `{id}` appears in more than one split"
                    )));
                }
            }
        }
        Ok(SplitAssignment { by_id })
    }

    /// Loads the splits JSON file: `{"train": [...], "val": [...],
    /// "test": [...]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let raw: RawSplits = serde_json::from_str(&text).map_err(|e| {
            schema_error(format!("splits file {}: {e}", path.display()))
        })?;
        SplitAssignment::new(raw.train, raw.val, raw.test)
    }

    /// Serializes back to the splits JSON shape.
    pub fn to_json(&self) -> String {
        let mut raw = RawSplits::default();
        let mut entries: Vec<(&String, &Split)> = self.by_id.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (id, split) in entries {
            match split {
                Split::Train => raw.train.push(id.clone()),
                Split::Val => raw.val.push(id.clone()),
                Split::Test => raw.test.push(id.clone()),
            }
        }
        serde_json::to_string_pretty(&raw).expect("splits serialize")
    }

    pub fn split_of(&self, graph_id: &str) -> Option<Split> {
        self.by_id.get(graph_id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Manifest indices belonging to `split`, in manifest order. Every
    /// assigned graph_id must exist in the manifest.
    pub fn indices(&self, manifest: &DatasetManifest, split: Split) -> Result<Vec<usize>> {
        let present: HashSet<&str> = manifest.graphs.iter().map(|g| g.graph_id.as_str()).collect();
        for id in self.by_id.keys() {
            if !present.contains(id.as_str()) {
                return Err(schema_error(format!(
                    "split assignment references unknown graph_id `{id}`"
                )));
            }
        }
        Ok(manifest
            .graphs
            .iter()
            .enumerate()
            .filter(|(_, g)| self.split_of(&g.graph_id) == Some(split))
            .map(|(i, _)| i)
            .collect())
    }
}

/// Removes low-confidence edges, then low-confidence nodes orphaned by that
/// removal.
///
/// Edges with confidence < `tau` are dropped; a node is then dropped only
/// if its own confidence is < `tau` *and* no surviving edge touches it.
/// `tau = 0` returns the graph unchanged. The result is re-validated (node
/// ids recompacted). Errors if `tau` is outside [0, 1] or if filtering
/// empties the graph — the caller decides the fallback.
pub fn filter_by_confidence(g: &SceneGraph, tau: f64) -> Result<SceneGraph> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid_argument(format!(
            "confidence threshold {tau} outside [0, 1]"
        )));
    }
    if tau == 0.0 {
        return Ok(g.clone());
    }
    let edges: Vec<RelationEdge> = g
        .edges
        .iter()
        .filter(|e| e.confidence >= tau)
        .cloned()
        .collect();
    let mut touched = HashSet::new();
    for e in &edges {
        touched.insert(e.subject_id);
        touched.insert(e.object_id);
    }
    let nodes: Vec<ObjectNode> = g
        .nodes
        .iter()
        .filter(|n| n.confidence >= tau || touched.contains(&n.node_id))
        .cloned()
        .collect();
    validate_graph(&SceneGraph {
        graph_id: g.graph_id.clone(),
        nodes,
        edges,
        label: g.label,
        subset_tag: g.subset_tag.clone(),
    })
}

/// Stratified fold assignment over a labeled manifest.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index per graph, aligned with manifest order.
    pub folds: Vec<usize>,
    graph_ids: Vec<String>,
}

impl FoldPlan {
    pub fn fold_of(&self, graph_id: &str) -> Option<usize> {
        self.graph_ids
            .iter()
            .position(|id| id == graph_id)
            .map(|i| self.folds[i])
    }

    /// Manifest indices whose fold equals `fold` (the validation side).
    pub fn val_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    /// Manifest indices in all other folds (the training side).
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] != fold)
            .collect()
    }
}

/// Builds a stratified k-fold plan: per class, members are shuffled
/// (seeded) and dealt round-robin across folds, so per-class fold counts
/// differ by at most one. Deterministic in (manifest order, k, seed).
///
/// Errors if `k < 2`, any graph is unlabeled, or any class has fewer than
/// `k` members (named in the error).
pub fn stratified_kfold(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(invalid_argument(format!("k-fold needs k >= 2, got {k}")));
    }
    let num_classes = manifest.class_set.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, g) in manifest.graphs.iter().enumerate() {
        let label = g.label.ok_or_else(|| {
            invalid_argument(format!(
                "graph `{}` is unlabeled; k-fold needs labels",
                g.graph_id
            ))
        })?;
        by_class[label].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(invalid_argument(format!(
                "class `{}` has {} member(s), fewer than k={k}",
                manifest.class_set.name(c),
                members.len()
            )));
        }
    }
    let mut folds = vec![0usize; manifest.len()];
    for (c, members) in by_class.iter().enumerate() {
        let mut order = members.clone();
        Pcg32::stream(seed, StreamId::Folds, c as u64).shuffle(&mut order);
        for (j, &idx) in order.iter().enumerate() {
            folds[idx] = j % k;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        folds,
        graph_ids: manifest.graphs.iter().map(|g| g.graph_id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Vocabulary;

    fn fixtures() -> (Vocabulary, ClassLabelSet) {
        (Vocabulary::vg150(), ClassLabelSet::places8())
    }

    const BEDROOM_LINE: &str = r#"{"graph_id":"img-1","label":"bedroom","subset":null,"width":256,"height":256,"objects":[{"id":0,"label":"bed","bbox":[10,20,200,180],"score":0.98},{"id":1,"label":"window","bbox":[150,0,256,90]}],"relations":[{"subj":0,"pred":"near","obj":1,"score":0.7}]}"#;

    #[test]
    fn parses_a_labeled_record() {
        let (v, c) = fixtures();
        let g = parse_graph_record(BEDROOM_LINE, &v, &c).unwrap();
        assert_eq!(g.graph_id, "img-1");
        assert_eq!(g.label, Some(c.index_of("bedroom").unwrap()));
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.nodes[0].label_index, v.lookup_object("bed"));
        // score defaults to 1.0 when absent
        assert_eq!(g.nodes[1].confidence, 1.0);
        // bbox normalized by the record's dimensions
        assert!((g.nodes[0].bbox[0] - 10.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_object_labels_fold_to_unk() {
        let (v, c) = fixtures();
        let line = r#"{"graph_id":"g","label":null,"width":100,"height":100,"objects":[{"id":0,"label":"zzz","bbox":[0,0,10,10],"score":1.0}],"relations":[]}"#;
        let g = parse_graph_record(line, &v, &c).unwrap();
        assert_eq!(g.nodes[0].label_index, v.unk_object_index());
    }

    #[test]
    fn parse_errors_are_classified() {
        let (v, c) = fixtures();
        // malformed JSON -> parse error
        assert!(matches!(
            parse_graph_record("{not json", &v, &c),
            Err(Error::Parse { .. })
        ));
        // missing width -> schema error naming the field
        let missing = r#"{"graph_id":"g","height":10,"objects":[],"relations":[]}"#;
        let err = parse_graph_record(missing, &v, &c).unwrap_err();
        assert!(matches!(&err, Error::Schema { message } if message.contains("width")));
        // unknown class -> label error
        let bad_class = r#"{"graph_id":"g","label":"garage","width":10,"height":10,"objects":[{"id":0,"label":"bed","bbox":[0,0,1,1]}],"relations":[]}"#;
        assert!(matches!(
            parse_graph_record(bad_class, &v, &c),
            Err(Error::UnknownClass { .. })
        ));
        // zero objects -> empty graph error
        let empty = r#"{"graph_id":"g","label":null,"width":10,"height":10,"objects":[],"relations":[]}"#;
        let err = parse_graph_record(empty, &v, &c).unwrap_err();
        assert!(err.to_string().contains("empty graph"));
    }

    #[test]
    fn parse_serialize_parse_roundtrips() {
        let (v, c) = fixtures();
        let g1 = parse_graph_record(BEDROOM_LINE, &v, &c).unwrap();
        let line = serialize_graph(&g1, &v, &c).unwrap();
        let g2 = parse_graph_record(&line, &v, &c).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn strict_load_reports_line_numbers() {
        let (v, c) = fixtures();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, format!("{BEDROOM_LINE}\nnot json\n")).unwrap();
        let err = load_manifest(&path, &v, &c, true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn lenient_load_skips_and_counts() {
        let (v, c) = fixtures();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, format!("{BEDROOM_LINE}\nnot json\n\n")).unwrap();
        let m = load_manifest(&path, &v, &c, false).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.skipped_lines, 1);
    }

    #[test]
    fn duplicate_graph_ids_are_rejected() {
        let (v, c) = fixtures();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, format!("{BEDROOM_LINE}\n{BEDROOM_LINE}\n")).unwrap();
        let err = load_manifest(&path, &v, &c, true).unwrap_err();
        assert!(err.to_string().contains("duplicate graph_id"));
    }

    #[test]
    fn splits_load_and_reject_overlap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        std::fs::write(&path, r#"{"train":["a","b"],"val":["c"],"test":["d"]}"#).unwrap();
        let s = SplitAssignment::load(&path).unwrap();
        assert_eq!(s.split_of("a"), Some(Split::Train));
        assert_eq!(s.split_of("c"), Some(Split::Val));
        assert_eq!(s.split_of("zzz"), None);

        std::fs::write(&path, r#"{"train":["a"],"val":["a"],"test":[]}"#).unwrap();
        assert!(SplitAssignment::load(&path).is_err());
    }

    fn graph_with_confidences(edge_confs: &[f64], node_confs: &[f64]) -> SceneGraph {
        let nodes = node_confs
            .iter()
            .enumerate()
            .map(|(i, &c)| ObjectNode {
                node_id: i,
                label_index: 0,
                bbox: [0.0, 0.0, 1.0, 1.0],
                confidence: c,
            })
            .collect();
        let edges = edge_confs
            .iter()
            .enumerate()
            .map(|(i, &c)| RelationEdge {
                subject_id: i,
                predicate_index: i,
                object_id: i + 1,
                confidence: c,
            })
            .collect();
        validate_graph(&SceneGraph {
            graph_id: "g".into(),
            nodes,
            edges,
            label: Some(0),
            subset_tag: None,
        })
        .unwrap()
    }

    #[test]
    fn filter_keeps_high_confidence_edges_only() {
        let g = graph_with_confidences(&[0.3, 0.9], &[1.0, 1.0, 1.0]);
        let f = filter_by_confidence(&g, 0.5).unwrap();
        assert_eq!(f.edges.len(), 1);
        assert_eq!(f.edges[0].confidence, 0.9);
        assert_eq!(f.nodes.len(), 3);
    }

    #[test]
    fn filter_drops_only_orphaned_low_confidence_nodes() {
        // Node 2 is low-confidence but kept by its surviving edge; node 0
        // is low-confidence and orphaned after its edge is removed.
        let g = graph_with_confidences(&[0.2, 0.8], &[0.3, 1.0, 0.3]);
        let f = filter_by_confidence(&g, 0.5).unwrap();
        assert_eq!(f.nodes.len(), 2);
        assert_eq!(f.edges.len(), 1);
    }

    #[test]
    fn filter_zero_tau_is_identity_and_domain_is_checked() {
        let g = graph_with_confidences(&[0.1], &[0.1, 0.1]);
        assert_eq!(filter_by_confidence(&g, 0.0).unwrap(), g);
        assert!(filter_by_confidence(&g, 1.01).is_err());
        assert!(filter_by_confidence(&g, -0.1).is_err());
        // Filtering everything away errors.
        assert!(filter_by_confidence(&g, 0.9).is_err());
    }

    #[test]
    fn filter_is_monotone_in_tau() {
        let g = graph_with_confidences(&[0.2, 0.5, 0.7, 0.95], &[1.0; 5]);
        let mut last = usize::MAX;
        for tau in [0.0, 0.3, 0.6, 0.8] {
            let f = filter_by_confidence(&g, tau).unwrap();
            assert!(f.edges.len() <= last);
            last = f.edges.len();
        }
    }

    fn labeled_manifest(labels: &[usize]) -> DatasetManifest {
        let classes = ClassLabelSet::new(vec!["a".into(), "b".into()]).unwrap();
        let graphs = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| SceneGraph {
                graph_id: format!("g{i}"),
                nodes: vec![ObjectNode {
                    node_id: 0,
                    label_index: 0,
                    bbox: [0.0, 0.0, 1.0, 1.0],
                    confidence: 1.0,
                }],
                edges: vec![],
                label: Some(l),
                subset_tag: None,
            })
            .collect();
        DatasetManifest {
            graphs,
            class_set: classes,
            source: "test".into(),
            skipped_lines: 0,
        }
    }

    #[test]
    fn kfold_balances_classes_exactly_when_divisible() {
        let m = labeled_manifest(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let plan = stratified_kfold(&m, 5, 3).unwrap();
        for fold in 0..5 {
            let val = plan.val_indices(fold);
            assert_eq!(val.len(), 2);
            let labels: Vec<usize> = val.iter().map(|&i| m.graphs[i].label.unwrap()).collect();
            assert!(labels.contains(&0) && labels.contains(&1), "fold {fold}");
        }
    }

    #[test]
    fn kfold_is_deterministic_and_partitions() {
        let m = labeled_manifest(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1]);
        let a = stratified_kfold(&m, 3, 7).unwrap();
        let b = stratified_kfold(&m, 3, 7).unwrap();
        assert_eq!(a.folds, b.folds);
        let c = stratified_kfold(&m, 3, 8).unwrap();
        assert_ne!(a.folds, c.folds, "different seed should reshuffle");
        // Partition: every index in exactly one fold's val side.
        let mut seen = vec![false; m.len()];
        for fold in 0..3 {
            for i in a.val_indices(fold) {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        // Per-class balance within 1.
        for class in 0..2 {
            let mut per_fold = vec![0usize; 3];
            for (i, g) in m.graphs.iter().enumerate() {
                if g.label == Some(class) {
                    per_fold[a.folds[i]] += 1;
                }
            }
            let min = per_fold.iter().min().unwrap();
            let max = per_fold.iter().max().unwrap();
            assert!(max - min <= 1, "class {class}: {per_fold:?}");
        }
    }

    #[test]
    fn kfold_rejects_thin_classes_by_name() {
        let m = labeled_manifest(&[0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let err = stratified_kfold(&m, 5, 0).unwrap_err();
        assert!(err.to_string().contains("`b`"), "{err}");
        assert!(stratified_kfold(&m, 1, 0).is_err());
    }
}
