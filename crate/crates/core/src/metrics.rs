//! Evaluation metrics: confusion matrices, balanced accuracy, recall, and
//! per-subset accuracy tables.
//!
//! Balanced accuracy is macro-averaged per-class recall. Classes that never
//! appear in the evaluated sample are excluded from the average (not counted
//! as zero); exclusions are logged and surfaced in [`MetricsReport`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};

/// Integer confusion counts; rows index the true class, columns the
/// predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// All-zero matrix over `num_classes` classes.
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Count of samples with true class `t` predicted as `p`.
    pub fn count(&self, t: usize, p: usize) -> u64 {
        self.counts[t * self.num_classes + p]
    }

    /// Adds one observation.
    pub fn record(&mut self, t: usize, p: usize) {
        self.counts[t * self.num_classes + p] += 1;
    }

    /// Number of evaluated samples with true class `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(c, p)).sum()
    }

    /// Total number of evaluated samples.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts as nested rows (true class × predicted class).
    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.num_classes)
            .map(|t| (0..self.num_classes).map(|p| self.count(t, p)).collect())
            .collect()
    }

    /// Row-normalized matrix; rows with no samples stay all-zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.num_classes)
            .map(|t| {
                let sum = self.row_sum(t);
                (0..self.num_classes)
                    .map(|p| {
                        if sum == 0 {
                            0.0
                        } else {
                            self.count(t, p) as f64 / sum as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Builds a matrix from explicit rows (used by tests and reports).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid_argument("confusion matrix must be square"));
        }
        let mut cm = ConfusionMatrix::new(n);
        for (t, row) in rows.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                cm.counts[t * n + p] = c;
            }
        }
        Ok(cm)
    }
}

/// Tallies true/predicted label pairs into a confusion matrix.
pub fn confusion_matrix(
    true_labels: &[usize],
    predicted_labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted_labels.len() {
        return Err(invalid_argument(format!(
            "label vectors differ in length: {} vs {}",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        if t >= num_classes || p >= num_classes {
            return Err(invalid_argument(format!(
                "label out of range: ({t}, {p}) with {num_classes} classes"
            )));
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Balanced accuracy with the indices of classes excluded for having no
/// evaluated samples.
pub fn balanced_accuracy_detailed(cm: &ConfusionMatrix) -> Result<(f64, Vec<usize>)> {
    let mut sum = 0.0;
    let mut present = 0usize;
    let mut excluded = Vec::new();
    for c in 0..cm.num_classes() {
        let row = cm.row_sum(c);
        if row == 0 {
            excluded.push(c);
        } else {
            sum += cm.count(c, c) as f64 / row as f64;
            present += 1;
        }
    }
    if present == 0 {
        return Err(invalid_argument(
            "balanced accuracy undefined: no evaluated samples",
        ));
    }
    Ok((sum / present as f64, excluded))
}

/// Macro-averaged per-class recall over the classes present in the sample.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let (value, excluded) = balanced_accuracy_detailed(cm)?;
    if !excluded.is_empty() {
        log::warn!(
            "balanced accuracy excludes {} class(es) with no evaluated samples: {:?}",
            excluded.len(),
            excluded
        );
    }
    Ok(value)
}

/// Recall of one class: diagonal count over its row sum.
pub fn recall(cm: &ConfusionMatrix, positive_class: usize) -> Result<f64> {
    if cm.num_classes() < 2 {
        return Err(invalid_argument("recall needs at least two classes"));
    }
    if positive_class >= cm.num_classes() {
        return Err(invalid_argument(format!(
            "positive class {positive_class} out of range for {} classes",
            cm.num_classes()
        )));
    }
    let row = cm.row_sum(positive_class);
    if row == 0 {
        return Err(invalid_argument(format!(
            "recall undefined: class {positive_class} has no evaluated samples"
        )));
    }
    Ok(cm.count(positive_class, positive_class) as f64 / row as f64)
}

/// Accuracy and sample count of one subset row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub accuracy: f64,
    pub count: usize,
}

/// Per-subset accuracy table. Samples without a tag group under
/// `"untagged"`; a `"global"` row covers every sample.
pub fn per_subset_accuracy(
    predictions: &[usize],
    labels: &[usize],
    subset_tags: &[Option<String>],
) -> BTreeMap<String, SubsetAccuracy> {
    assert_eq!(predictions.len(), labels.len(), "aligned vectors required");
    assert_eq!(predictions.len(), subset_tags.len(), "one tag per sample");
    let mut correct: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut global = (0usize, 0usize);
    for i in 0..predictions.len() {
        let tag = subset_tags[i].as_deref().unwrap_or("untagged");
        let entry = correct.entry(tag).or_default();
        entry.1 += 1;
        global.1 += 1;
        if predictions[i] == labels[i] {
            entry.0 += 1;
            global.0 += 1;
        }
    }
    let mut table: BTreeMap<String, SubsetAccuracy> = correct
        .into_iter()
        .map(|(tag, (c, n))| {
            (
                tag.to_string(),
                SubsetAccuracy {
                    accuracy: c as f64 / n as f64,
                    count: n,
                },
            )
        })
        .collect();
    let global_row = SubsetAccuracy {
        accuracy: if global.1 == 0 {
            0.0
        } else {
            global.0 as f64 / global.1 as f64
        },
        count: global.1,
    };
    table.insert("global".to_string(), global_row);
    table
}

/// Full evaluation report, serializable to JSON and renderable as text.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub balanced_accuracy: f64,
    /// Recall per class; `None` for classes with no evaluated samples.
    pub per_class_recall: Vec<Option<f64>>,
    /// Recall of the designated positive class (binary problems).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positive_recall: Option<f64>,
    pub confusion_counts: Vec<Vec<u64>>,
    pub confusion_row_normalized: Vec<Vec<f64>>,
    pub per_subset: BTreeMap<String, SubsetAccuracy>,
    /// Evaluated sample count per true class.
    pub counts: Vec<u64>,
    pub class_labels: Vec<String>,
    /// Classes excluded from the balanced-accuracy average.
    pub excluded_classes: Vec<usize>,
}

impl MetricsReport {
    /// Builds the report from aligned prediction/label/tag vectors.
    pub fn from_predictions(
        true_labels: &[usize],
        predictions: &[usize],
        subset_tags: &[Option<String>],
        class_labels: &[String],
        positive_class: Option<usize>,
    ) -> Result<Self> {
        let num_classes = class_labels.len();
        let cm = confusion_matrix(true_labels, predictions, num_classes)?;
        let (bacc, excluded) = balanced_accuracy_detailed(&cm)?;
        if !excluded.is_empty() {
            log::warn!(
                "balanced accuracy excludes {} class(es) with no evaluated samples",
                excluded.len()
            );
        }
        let per_class_recall = (0..num_classes)
            .map(|c| {
                if cm.row_sum(c) == 0 {
                    None
                } else {
                    Some(cm.count(c, c) as f64 / cm.row_sum(c) as f64)
                }
            })
            .collect();
        let positive_recall = match positive_class {
            Some(p) if num_classes == 2 => Some(recall(&cm, p)?),
            _ => None,
        };
        Ok(MetricsReport {
            balanced_accuracy: bacc,
            per_class_recall,
            positive_recall,
            confusion_counts: cm.rows(),
            confusion_row_normalized: cm.row_normalized(),
            per_subset: per_subset_accuracy(predictions, true_labels, subset_tags),
            counts: (0..num_classes).map(|c| cm.row_sum(c)).collect(),
            class_labels: class_labels.to_vec(),
            excluded_classes: excluded,
        })
    }

    /// Plain-text table rendering for terminals.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "balanced accuracy: {:.4}", self.balanced_accuracy);
        if let Some(r) = self.positive_recall {
            let _ = writeln!(out, "positive-class recall: {r:.4}");
        }
        let width = self
            .class_labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let _ = writeln!(out, "\nper-class recall:");
        for (c, label) in self.class_labels.iter().enumerate() {
            match self.per_class_recall[c] {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "  {label:<width$}  {r:.4}  ({} samples)",
                        self.counts[c]
                    );
                }
                None => {
                    let _ = writeln!(out, "  {label:<width$}  -       (0 samples)");
                }
            }
        }
        let _ = writeln!(out, "\nconfusion matrix (rows = true class):");
        for (c, label) in self.class_labels.iter().enumerate() {
            let row = self.confusion_counts[c]
                .iter()
                .map(|v| format!("{v:>6}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(out, "  {label:<width$}  {row}");
        }
        if self.per_subset.len() > 1 {
            let _ = writeln!(out, "\nper-subset accuracy:");
            for (tag, row) in &self.per_subset {
                let _ = writeln!(
                    out,
                    "  {tag:<12}  {:.4}  ({} samples)",
                    row.accuracy, row.count
                );
            }
        }
        out
    }
}
