//! Acceptance gate: one test per release criterion, each printing a single
//! `criterion NN PASS/FAIL` line with the measured values (visible under
//! `--nocapture`). Criteria that concern the command-line surface drive the
//! built binary; the rest drive the library directly.

use std::fs;
use std::process::{Command, Output};
use std::time::Instant;

use asgra_core::explain::per_image_attribution;
use asgra_core::graph::{ClassLabelSet, RelationEdge, SceneGraph, Vocabulary};
use asgra_core::ingest::filter_by_confidence;
use asgra_core::metrics::MetricsReport;
use asgra_core::model::{
    forward, forward_logits, loss_and_gradients, evaluation_loss, Mode, ModelConfig,
    ModelParameters, HEAD_PREFIX,
};
use asgra_core::numerics::finite_difference_check;
use asgra_core::rng::{Pcg32, StreamId};
use asgra_core::synthgen::{
    generate_dataset, inject_hallucination, places8_demo, GeneratorSpec, SplitCounts,
};
use asgra_core::train::{
    evaluate, load_checkpoint, save_checkpoint, train, EarlyStopState, RunContext, TrainConfig,
};

fn verdict(n: u32, ok: bool, detail: &str) {
    println!("criterion {n:02} {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n:02} failed: {detail}");
}

fn full_model_config() -> ModelConfig {
    let vocab = Vocabulary::vg150();
    ModelConfig::new(vocab.num_object_labels(), vocab.num_relation_labels(), 8)
}

/// Deterministic synthetic eight-class set at the demo scale.
fn demo_dataset(counts: SplitCounts, separation: f64) -> (Vec<SceneGraph>, ClassLabelSet) {
    let mut spec = places8_demo();
    spec.counts = counts;
    spec.separation = separation;
    let vocab = Vocabulary::vg150();
    let (manifest, _) = generate_dataset(&spec, &vocab).expect("generation failed");
    (manifest.graphs, manifest.class_set)
}

fn asgra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asgra"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch binary")
}

fn assert_cmd_ok(out: &Output, what: &str) {
    assert!(
        out.status.code() == Some(0),
        "{what} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Two-class spec used by the command-line criteria; learnable in seconds.
const SMALL_SPEC: &str = r#"{
  "seed": 11,
  "separation": 1.0,
  "counts": { "train": 40, "val": 10, "test": 10 },
  "background": {
    "objects": [ { "label": "window", "weight": 0.5 }, { "label": "door", "weight": 0.5 } ],
    "predicates": [ { "label": "on", "weight": 0.5 }, { "label": "near", "weight": 0.5 } ]
  },
  "classes": [
    {
      "name": "alpha",
      "objects": [ { "label": "cup", "weight": 0.6 }, { "label": "bowl", "weight": 0.4 } ],
      "predicates": [ { "label": "on", "weight": 0.7 }, { "label": "holding", "weight": 0.3 } ],
      "node_count": [3, 6],
      "edge_density": [0.2, 0.4]
    },
    {
      "name": "beta",
      "objects": [ { "label": "bed", "weight": 0.6 }, { "label": "pillow", "weight": 0.4 } ],
      "predicates": [ { "label": "near", "weight": 0.7 }, { "label": "under", "weight": 0.3 } ],
      "node_count": [3, 6],
      "edge_density": [0.2, 0.4]
    }
  ]
}"#;

const SMALL_TRAIN: &str = r#"{
  "model": {
    "object_embed_dim": 16,
    "relation_embed_dim": 8,
    "hidden_dim": 16,
    "num_heads": 2,
    "num_layers": 2,
    "dropout": 0.1
  },
  "train": {
    "learning_rate": 0.01,
    "weight_decay": 0.0,
    "batch_size": 8,
    "max_epochs": 12,
    "patience": 0,
    "seed": 0
  }
}"#;

/// The documented reproduction commands exist: headline numbers are out of
/// desk-scale reach (external/private data), so the README must spell out
/// the exact commands that would reproduce them given the graphs.
#[test]
fn criterion_01_reproduction_commands_documented() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .expect("README.md missing");
    let required = [
        "81.27",
        "74.27",
        "76.55",
        "asgra train",
        "asgra eval",
        "configs/train_places8.json",
        "configs/train_rcpd.json",
    ];
    let missing: Vec<&str> = required.iter().copied().filter(|s| !readme.contains(s)).collect();
    verdict(
        1,
        missing.is_empty(),
        &format!("README documents reproduction commands and reference numbers (missing: {missing:?})"),
    );
}

/// Analytic gradients match central finite differences on the full-size
/// model, dropout off, over at least 200 random parameter probes.
#[test]
fn criterion_02_gradient_check_full_model() {
    let started = Instant::now();
    let mut config = full_model_config();
    config.dropout = 0.0;
    let (graphs, _) = demo_dataset(SplitCounts { train: 4, val: 1, test: 1 }, 1.0);
    let batch: Vec<&SceneGraph> = graphs[..4].iter().collect();

    let mut init_rng = Pcg32::stream(2, StreamId::Init, 0);
    let mut store = ModelParameters::<f64>::init(&config, &mut init_rng).unwrap().store;
    let mut dropout_rng = Pcg32::stream(2, StreamId::Dropout, 0);
    loss_and_gradients(&batch, &config, &mut store, &mut dropout_rng, None).unwrap();

    let mut probe_rng = Pcg32::stream(2, StreamId::Probes, 0);
    let report = finite_difference_check(
        &mut store,
        |s| evaluation_loss(&batch, &config, s, None),
        200,
        1e-4,
        &mut probe_rng,
    )
    .unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ok = report.max_error < 1e-5 && secs < 120.0;
    verdict(
        2,
        ok,
        &format!(
            "max relative error {:.3e} over {} probes in {:.1}s (need < 1e-5, < 120s)",
            report.max_error,
            report.probes.len(),
            secs
        ),
    );
}

/// The full-size configuration learns a separable 8-class synthetic set to
/// high balanced accuracy within the stated wall-clock budget.
#[test]
fn criterion_03_synthetic_learnability() {
    let started = Instant::now();
    let (graphs, classes) = demo_dataset(
        SplitCounts { train: 2000, val: 500, test: 500 },
        0.9,
    );
    let train_set = graphs[..2000].to_vec();
    let val_set = graphs[2000..2500].to_vec();
    let test_set: Vec<&SceneGraph> = graphs[2500..].iter().collect();

    let model_config = full_model_config();
    let train_config = TrainConfig { max_epochs: 60, ..TrainConfig::default() };
    let vocab = Vocabulary::vg150();
    let context = RunContext::new(&vocab, &classes);
    let run = train::<f64>(&train_set, &val_set, &model_config, &train_config, None, &context)
        .unwrap();

    let outcome = evaluate(
        &run.checkpoint.store,
        &model_config,
        &test_set,
        train_config.batch_size,
        None,
    )
    .unwrap();
    let truth: Vec<usize> = test_set.iter().map(|g| g.label.unwrap()).collect();
    let report = MetricsReport::from_predictions(
        &truth,
        &outcome.predictions,
        &vec![None; truth.len()],
        classes.names(),
        None,
    )
    .unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ok = report.balanced_accuracy >= 0.95 && secs < 300.0;
    verdict(
        3,
        ok,
        &format!(
            "test balanced accuracy {:.4} after {} epochs in {:.1}s (need >= 0.95, < 300s)",
            report.balanced_accuracy,
            run.checkpoint.history.len(),
            secs
        ),
    );
}

/// The model memorizes 32 labelled graphs perfectly within 300 epochs.
#[test]
fn criterion_04_overfit_sanity() {
    let (graphs, classes) = demo_dataset(SplitCounts { train: 32, val: 4, test: 4 }, 1.0);
    let train_set = graphs[..32].to_vec();
    let model_config = full_model_config();
    let train_config = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 300,
        patience: 0,
        ..TrainConfig::default()
    };
    let vocab = Vocabulary::vg150();
    let context = RunContext::new(&vocab, &classes);
    let run = train::<f64>(&train_set, &train_set, &model_config, &train_config, None, &context)
        .unwrap();

    let refs: Vec<&SceneGraph> = train_set.iter().collect();
    let outcome = evaluate(&run.checkpoint.store, &model_config, &refs, 8, None).unwrap();
    let correct = refs
        .iter()
        .zip(&outcome.predictions)
        .filter(|(g, &p)| g.label.unwrap() == p)
        .count();
    let acc = correct as f64 / refs.len() as f64;
    verdict(
        4,
        acc == 1.0,
        &format!(
            "train accuracy {acc:.4} on 32 graphs after {} epochs (need exactly 1.0)",
            run.checkpoint.history.len()
        ),
    );
}

/// Every attention group and every pooling-weight vector is a distribution.
#[test]
fn criterion_05_attention_and_pooling_sums() {
    let (graphs, _) = demo_dataset(SplitCounts { train: 80, val: 10, test: 10 }, 0.7);
    let config = full_model_config();
    let mut init_rng = Pcg32::stream(5, StreamId::Init, 0);
    let store = ModelParameters::<f64>::init(&config, &mut init_rng).unwrap().store;

    let mut worst = 0.0f64;
    let mut groups = 0usize;
    for graph in &graphs {
        let (_, record) = forward(graph, &config, &store, Mode::Eval, None).unwrap();
        for alpha in &record.attention {
            for head in 0..alpha.cols() {
                let mut by_dst = std::collections::HashMap::new();
                for (e, edge) in record.edges.iter().enumerate() {
                    *by_dst.entry(edge.dst).or_insert(0.0) += alpha.get(e, head);
                }
                for (_, sum) in by_dst {
                    worst = worst.max((sum - 1.0f64).abs());
                    groups += 1;
                }
            }
        }
        let pool: f64 = record.pooling_weights.iter().sum();
        worst = worst.max((pool - 1.0).abs());
        groups += 1;
    }
    verdict(
        5,
        worst <= 1e-9,
        &format!(
            "max |sum - 1| = {worst:.3e} over {groups} attention/pooling groups on {} graphs (need <= 1e-9)",
            graphs.len()
        ),
    );
}

/// Renaming the nodes of a graph permutes the attribution and leaves the
/// logits unchanged.
#[test]
fn criterion_06_permutation_invariance() {
    let (graphs, classes) = demo_dataset(SplitCounts { train: 80, val: 10, test: 10 }, 0.7);
    let vocab = Vocabulary::vg150();
    let config = full_model_config();
    let mut init_rng = Pcg32::stream(6, StreamId::Init, 0);
    let store = ModelParameters::<f64>::init(&config, &mut init_rng).unwrap().store;

    let mut worst_logit = 0.0f64;
    let mut worst_attr = 0.0f64;
    let mut perm_rng = Pcg32::stream(6, StreamId::Probes, 1);
    for graph in &graphs {
        let n = graph.nodes.len();
        // pi[old] = new position.
        let mut pi: Vec<usize> = (0..n).collect();
        perm_rng.shuffle(&mut pi);
        let mut nodes = graph.nodes.clone();
        for (old, node) in graph.nodes.iter().enumerate() {
            let mut moved = node.clone();
            moved.node_id = pi[old];
            nodes[pi[old]] = moved;
        }
        let edges = graph
            .edges
            .iter()
            .map(|e| RelationEdge {
                subject_id: pi[e.subject_id],
                object_id: pi[e.object_id],
                ..e.clone()
            })
            .collect();
        let permuted = SceneGraph {
            graph_id: graph.graph_id.clone(),
            nodes,
            edges,
            label: graph.label,
            subset_tag: graph.subset_tag.clone(),
        };

        let (logits_a, record_a) = forward(graph, &config, &store, Mode::Eval, None).unwrap();
        let (logits_b, record_b) = forward(&permuted, &config, &store, Mode::Eval, None).unwrap();
        for (a, b) in logits_a.iter().zip(&logits_b) {
            worst_logit = worst_logit.max((a - b).abs());
        }

        let attr_a = per_image_attribution(&record_a, graph, &vocab, &classes).unwrap();
        let attr_b = per_image_attribution(&record_b, &permuted, &vocab, &classes).unwrap();
        // Node importance must follow the renaming.
        let mut by_id_b = std::collections::HashMap::new();
        for row in &attr_b.nodes {
            by_id_b.insert(row.node_id, row.importance);
        }
        for row in &attr_a.nodes {
            let moved = by_id_b[&pi[row.node_id]];
            worst_attr = worst_attr.max((row.importance - moved).abs());
        }
        let mut edge_b = std::collections::HashMap::new();
        for row in &attr_b.edges {
            edge_b.insert((row.subject_id, row.object_id), row.importance);
        }
        for row in &attr_a.edges {
            let moved = edge_b[&(pi[row.subject_id], pi[row.object_id])];
            worst_attr = worst_attr.max((row.importance - moved).abs());
        }
    }
    let ok = worst_logit <= 1e-9 && worst_attr <= 1e-9;
    verdict(
        6,
        ok,
        &format!(
            "max logit drift {worst_logit:.3e}, max attribution drift {worst_attr:.3e} over 100 graphs (need <= 1e-9)"
        ),
    );
}

/// Logits computed in a batched union match isolated per-graph forwards.
#[test]
fn criterion_07_batching_soundness() {
    let (graphs, _) = demo_dataset(SplitCounts { train: 80, val: 10, test: 10 }, 0.7);
    let config = full_model_config();
    let mut init_rng = Pcg32::stream(7, StreamId::Init, 0);
    let store = ModelParameters::<f64>::init(&config, &mut init_rng).unwrap().store;

    let refs: Vec<&SceneGraph> = graphs.iter().collect();
    let batched = forward_logits(&refs, &config, &store).unwrap();
    let mut worst = 0.0f64;
    for (i, graph) in graphs.iter().enumerate() {
        let single = forward_logits(&[graph], &config, &store).unwrap();
        for (a, b) in batched.row(i).iter().zip(single.row(0)) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        7,
        worst <= 1e-9,
        &format!(
            "max |batched - isolated| logit difference {worst:.3e} over {} graphs (need <= 1e-9)",
            graphs.len()
        ),
    );
}

/// Head-only fine-tuning trains the head and freezes everything else.
#[test]
fn criterion_08_head_only_freeze() {
    let (graphs, classes) = demo_dataset(SplitCounts { train: 24, val: 8, test: 8 }, 1.0);
    let train_set = graphs[..24].to_vec();
    let val_set = graphs[24..32].to_vec();
    let vocab = Vocabulary::vg150();
    let context = RunContext::new(&vocab, &classes);
    let config = ModelConfig {
        object_embed_dim: 16,
        relation_embed_dim: 8,
        hidden_dim: 16,
        num_heads: 2,
        dropout: 0.1,
        ..full_model_config()
    };

    let base_cfg = TrainConfig { max_epochs: 2, patience: 0, ..TrainConfig::default() };
    let base = train::<f64>(&train_set, &val_set, &config, &base_cfg, None, &context).unwrap();

    let tune_cfg = TrainConfig {
        max_epochs: 5,
        patience: 0,
        learning_rate: 1e-2,
        finetune_mode: asgra_core::train::FinetuneMode::HeadOnly,
        ..TrainConfig::default()
    };
    let tuned = train::<f64>(
        &train_set,
        &val_set,
        &config,
        &tune_cfg,
        Some(&base.checkpoint),
        &context,
    )
    .unwrap();

    let mut frozen_diff_bytes = 0usize;
    let mut head_diff_bytes = 0usize;
    for (a, b) in base.checkpoint.store.iter().zip(tuned.checkpoint.store.iter()) {
        assert_eq!(a.name, b.name);
        for (&x, &y) in a.value.data().iter().zip(b.value.data()) {
            let differing = x
                .to_bits()
                .to_le_bytes()
                .iter()
                .zip(y.to_bits().to_le_bytes())
                .filter(|(p, q)| **p != *q)
                .count();
            if a.name.starts_with(HEAD_PREFIX) {
                head_diff_bytes += differing;
            } else {
                frozen_diff_bytes += differing;
            }
        }
    }
    let ok = frozen_diff_bytes == 0 && head_diff_bytes > 0;
    verdict(
        8,
        ok,
        &format!(
            "after 5 head-only epochs: {frozen_diff_bytes} differing bytes outside the head (need 0), {head_diff_bytes} inside it (need > 0)"
        ),
    );
}

/// Balanced accuracy agrees with a brute-force per-class-recall oracle.
#[test]
fn criterion_09_metric_oracle() {
    let classes: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    let mut rng = Pcg32::stream(9, StreamId::Probes, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = 2 + rng.below(5); // 2..=6 classes
        let mut counts = vec![vec![0u64; k]; k];
        for row in counts.iter_mut() {
            for cell in row.iter_mut() {
                // Zero entire cells often so empty-class exclusion is hit.
                *cell = if rng.next_f64() < 0.2 { 0 } else { rng.below(20) as u64 };
            }
        }
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (t, row) in counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    truth.push(t);
                    pred.push(p);
                }
            }
        }
        if truth.is_empty() {
            continue;
        }
        let report = MetricsReport::from_predictions(
            &truth,
            &pred,
            &vec![None; truth.len()],
            &classes[..k],
            None,
        )
        .unwrap();
        // Oracle: mean per-class recall over classes with any support.
        let mut recalls = Vec::new();
        for (t, row) in counts.iter().enumerate() {
            let support: u64 = row.iter().sum();
            if support > 0 {
                recalls.push(row[t] as f64 / support as f64);
            }
        }
        let oracle = recalls.iter().sum::<f64>() / recalls.len() as f64;
        worst = worst.max((report.balanced_accuracy - oracle).abs());
    }

    // Hand-checked case: recalls 3/4 and 4/6.
    let truth = [vec![0; 4], vec![1; 6]].concat();
    let pred = [vec![0; 3], vec![1; 1], vec![0; 2], vec![1; 4]].concat();
    let hand = MetricsReport::from_predictions(
        &truth,
        &pred,
        &vec![None; truth.len()],
        &classes[..2],
        None,
    )
    .unwrap();
    let expected = (3.0 / 4.0 + 4.0 / 6.0) / 2.0;
    let hand_err = (hand.balanced_accuracy - expected).abs();

    let ok = worst <= 1e-12 && hand_err <= 1e-12;
    verdict(
        9,
        ok,
        &format!(
            "max |balanced accuracy - oracle| = {worst:.3e} over 1000 confusion matrices; hand case error {hand_err:.3e} vs {expected:.6} (need <= 1e-12)"
        ),
    );
}

/// Identical command-line training runs write byte-identical checkpoints,
/// and identical eval runs write identical reports.
#[test]
fn criterion_10_command_line_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    fs::write(dir.path().join("spec.json"), SMALL_SPEC).unwrap();
    fs::write(dir.path().join("run.json"), SMALL_TRAIN).unwrap();
    fs::write(dir.path().join("classes.txt"), "alpha\nbeta\n").unwrap();

    let out = asgra(&["gen", "--spec", &path("spec.json"), "--out", &path("data")]);
    assert_cmd_ok(&out, "gen");

    for name in ["a.ckpt", "b.ckpt"] {
        let out = asgra(&[
            "train",
            "--data", &path("data/dataset.jsonl"),
            "--splits", &path("data/splits.json"),
            "--config", &path("run.json"),
            "--classes", &path("classes.txt"),
            "--out", &path(name),
        ]);
        assert_cmd_ok(&out, "train");
    }
    let ckpt_a = fs::read(dir.path().join("a.ckpt")).unwrap();
    let ckpt_b = fs::read(dir.path().join("b.ckpt")).unwrap();

    for name in ["r1.json", "r2.json"] {
        let out = asgra(&[
            "eval",
            "--data", &path("data/dataset.jsonl"),
            "--splits", &path("data/splits.json"),
            "--split", "test",
            "--ckpt", &path("a.ckpt"),
            "--report", &path(name),
        ]);
        assert_cmd_ok(&out, "eval");
    }
    let rep_1 = fs::read(dir.path().join("r1.json")).unwrap();
    let rep_2 = fs::read(dir.path().join("r2.json")).unwrap();

    let ok = ckpt_a == ckpt_b && rep_1 == rep_2;
    verdict(
        10,
        ok,
        &format!(
            "checkpoints byte-identical: {}; eval reports identical: {}",
            ckpt_a == ckpt_b,
            rep_1 == rep_2
        ),
    );
}

/// A checkpoint survives a save/load round trip with bit-identical logits.
#[test]
fn criterion_11_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, classes) = demo_dataset(SplitCounts { train: 24, val: 8, test: 8 }, 1.0);
    let train_set = graphs[..24].to_vec();
    let val_set = graphs[24..32].to_vec();
    let vocab = Vocabulary::vg150();
    let context = RunContext::new(&vocab, &classes);
    let config = ModelConfig {
        object_embed_dim: 16,
        relation_embed_dim: 8,
        hidden_dim: 16,
        num_heads: 2,
        dropout: 0.1,
        ..full_model_config()
    };
    let train_config = TrainConfig { max_epochs: 3, patience: 0, ..TrainConfig::default() };
    let run = train::<f64>(&train_set, &val_set, &config, &train_config, None, &context).unwrap();

    let path = dir.path().join("model.ckpt");
    save_checkpoint(&run.checkpoint, &path).unwrap();
    let loaded = load_checkpoint::<f64>(&path).unwrap();

    let refs: Vec<&SceneGraph> = graphs.iter().collect();
    let before = forward_logits(&refs, &config, &run.checkpoint.store).unwrap();
    let after = forward_logits(&refs, &loaded.model_config, &loaded.store).unwrap();
    let differing = before
        .data()
        .iter()
        .zip(after.data())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    verdict(
        11,
        differing == 0,
        &format!(
            "{differing} of {} logits differ after save/load (need 0)",
            before.data().len()
        ),
    );
}

/// With a validation loss that plateaus at epoch e, training halts at
/// exactly epoch e + patience and reports best epoch e.
#[test]
fn criterion_12_early_stopping_exactness() {
    let config = ModelConfig {
        object_embed_dim: 4,
        relation_embed_dim: 4,
        hidden_dim: 4,
        num_heads: 2,
        num_layers: 1,
        ..full_model_config()
    };
    let mut rng = Pcg32::stream(12, StreamId::Init, 0);
    let params = ModelParameters::<f64>::init(&config, &mut rng).unwrap().store;

    let mut all_exact = true;
    let mut detail = String::new();
    for (plateau_epoch, patience) in [(4usize, 3usize), (1, 1), (7, 10)] {
        // Stubbed validation loss: strictly improving up to the plateau
        // epoch, flat afterwards.
        let val_loss = |epoch: usize| {
            if epoch <= plateau_epoch {
                1.0 / epoch as f64
            } else {
                1.0 / plateau_epoch as f64
            }
        };
        let mut early: EarlyStopState<f64> = EarlyStopState::new();
        let mut halted_at = 0;
        for epoch in 1..=1000 {
            early.observe(epoch, val_loss(epoch), &params);
            if early.should_stop(patience) {
                halted_at = epoch;
                break;
            }
        }
        let exact = halted_at == plateau_epoch + patience && early.best_epoch() == plateau_epoch;
        all_exact &= exact;
        detail.push_str(&format!(
            "[plateau {plateau_epoch}, patience {patience}: halted {halted_at}, best {}] ",
            early.best_epoch()
        ));
    }
    verdict(
        12,
        all_exact,
        &format!("{detail}(need halt = plateau + patience, best = plateau, exactly)"),
    );
}

/// Confident hallucinated edges survive confidence filtering untouched,
/// and the harness reports the accuracy deltas across thresholds.
#[test]
fn criterion_13_filter_ablation() {
    let spec: GeneratorSpec = serde_json::from_str(SMALL_SPEC).unwrap();
    let vocab = Vocabulary::vg150();
    let (manifest, splits) = generate_dataset(&spec, &vocab).unwrap();
    let classes = manifest.class_set.clone();
    let idx = |s| splits.indices(&manifest, s).unwrap();
    let train_set = manifest.select(&idx(asgra_core::ingest::Split::Train));
    let val_set = manifest.select(&idx(asgra_core::ingest::Split::Val));
    let test_set = manifest.select(&idx(asgra_core::ingest::Split::Test));

    let config = ModelConfig {
        object_embed_dim: 16,
        relation_embed_dim: 8,
        hidden_dim: 16,
        num_heads: 2,
        dropout: 0.1,
        num_classes: 2,
        ..full_model_config()
    };
    let train_config = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 12,
        patience: 0,
        ..TrainConfig::default()
    };
    let context = RunContext::new(&vocab, &classes);
    let run = train::<f64>(&train_set, &val_set, &config, &train_config, None, &context).unwrap();

    // Inject hallucinations at rate 0.3, confidence 0.9, into the test set.
    let mut rng = Pcg32::stream(13, StreamId::Generator, 0);
    let background = spec.background.predicates.clone();
    let mut corrupted = Vec::new();
    let mut injected = 0usize;
    for g in &test_set {
        let polluted = inject_hallucination(g, 0.3, &background, &vocab, &mut rng).unwrap();
        if polluted.edges.len() > g.edges.len() {
            injected += 1;
        }
        corrupted.push(polluted);
    }
    assert!(injected > 0, "hallucination rate 0.3 must inject something on 10 graphs");

    let marker = 0.9f64.to_bits();
    let count_marked = |graphs: &[SceneGraph]| -> usize {
        graphs
            .iter()
            .flat_map(|g| &g.edges)
            .filter(|e| e.confidence.to_bits() == marker)
            .count()
    };
    let marked_before = count_marked(&corrupted);

    let bacc = |graphs: &[SceneGraph]| -> f64 {
        let refs: Vec<&SceneGraph> = graphs.iter().collect();
        let outcome = evaluate(&run.checkpoint.store, &config, &refs, 8, None).unwrap();
        let truth: Vec<usize> = refs.iter().map(|g| g.label.unwrap()).collect();
        MetricsReport::from_predictions(
            &truth,
            &outcome.predictions,
            &vec![None; truth.len()],
            classes.names(),
            None,
        )
        .unwrap()
        .balanced_accuracy
    };

    let clean_bacc = bacc(&test_set);
    let polluted_bacc = bacc(&corrupted);
    let mut survived_all = true;
    let mut deltas = String::new();
    for tau in [0.5, 0.8] {
        let filtered: Vec<SceneGraph> = corrupted
            .iter()
            .map(|g| filter_by_confidence(g, tau).unwrap())
            .collect();
        let survived = count_marked(&filtered);
        survived_all &= survived == marked_before;
        let filtered_bacc = bacc(&filtered);
        deltas.push_str(&format!(
            "tau {tau}: {survived}/{marked_before} injected survive, balanced accuracy {filtered_bacc:.4} (delta {:+.4} vs polluted, {:+.4} vs clean); ",
            filtered_bacc - polluted_bacc,
            filtered_bacc - clean_bacc,
        ));
    }
    verdict(
        13,
        survived_all,
        &format!(
            "{injected} graphs hallucinated at confidence 0.9; clean balanced accuracy {clean_bacc:.4}, polluted {polluted_bacc:.4}; {deltas}(need 0% of injected edges removed)"
        ),
    );
}

/// The explanation tables have the documented shape, and at separation 1.0
/// each class's top object is one of its signature objects.
#[test]
fn criterion_14_explanation_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let run_config = r#"{
      "model": {
        "object_embed_dim": 32,
        "relation_embed_dim": 16,
        "hidden_dim": 64,
        "num_heads": 4,
        "num_layers": 2,
        "dropout": 0.1
      },
      "train": {
        "learning_rate": 3e-3,
        "weight_decay": 0.0,
        "batch_size": 8,
        "max_epochs": 25,
        "patience": 0,
        "seed": 0
      }
    }"#;
    fs::write(dir.path().join("run.json"), run_config).unwrap();

    let spec_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/gen_places8.json");
    let out = asgra(&["gen", "--spec", spec_path, "--out", &path("data")]);
    assert_cmd_ok(&out, "gen");
    let out = asgra(&[
        "train",
        "--data", &path("data/dataset.jsonl"),
        "--splits", &path("data/splits.json"),
        "--config", &path("run.json"),
        "--out", &path("model.ckpt"),
    ]);
    assert_cmd_ok(&out, "train");

    // Shape oracle computed directly from the dataset: distinct object and
    // predicate labels per class.
    let mut distinct_objects: std::collections::HashMap<String, std::collections::HashSet<String>> =
        Default::default();
    let mut distinct_relations: std::collections::HashMap<String, std::collections::HashSet<String>> =
        Default::default();
    for line in fs::read_to_string(dir.path().join("data/dataset.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let class = v["label"].as_str().unwrap().to_owned();
        for obj in v["objects"].as_array().unwrap() {
            distinct_objects
                .entry(class.clone())
                .or_default()
                .insert(obj["label"].as_str().unwrap().to_owned());
        }
        for rel in v["relations"].as_array().unwrap() {
            distinct_relations
                .entry(class.clone())
                .or_default()
                .insert(rel["pred"].as_str().unwrap().to_owned());
        }
    }

    // Row-count contract, independent of model quality: aggregate over all
    // graphs (misclassified included) so the oracle above applies exactly.
    let out = asgra(&[
        "explain",
        "--data", &path("data/dataset.jsonl"),
        "--ckpt", &path("model.ckpt"),
        "--include-misclassified",
        "--report", &path("all.json"),
    ]);
    assert_cmd_ok(&out, "explain");
    let all: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("all.json")).unwrap()).unwrap();
    let mut shape_ok = true;
    let mut shape_detail = String::new();
    for entry in all.as_array().unwrap() {
        let class = entry["class"].as_str().unwrap();
        let objects = entry["objects"].as_array().unwrap().len();
        let relations = entry["relations"].as_array().unwrap().len();
        let want_objects = distinct_objects[class].len().min(10);
        let want_relations = distinct_relations[class].len().min(5);
        if objects != want_objects || relations != want_relations {
            shape_ok = false;
            shape_detail.push_str(&format!(
                "{class}: {objects} object rows (want {want_objects}), {relations} relation rows (want {want_relations}); "
            ));
        }
    }

    // Top-1 contract on correctly classified graphs only.
    let out = asgra(&[
        "explain",
        "--data", &path("data/dataset.jsonl"),
        "--ckpt", &path("model.ckpt"),
        "--report", &path("correct.json"),
    ]);
    assert_cmd_ok(&out, "explain");
    let correct: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("correct.json")).unwrap())
            .unwrap();
    let signatures: std::collections::HashMap<&str, [&str; 3]> = [
        ("bathroom", ["sink", "toilet", "towel"]),
        ("bedroom", ["bed", "pillow", "lamp"]),
        ("child's room", ["child", "kid", "bear"]),
        ("classroom", ["desk", "book", "board"]),
        ("dressing room", ["shirt", "shoe", "coat"]),
        ("living room", ["table", "plant", "clock"]),
        ("studio", ["laptop", "screen", "phone"]),
        ("swimming pool", ["wave", "beach", "umbrella"]),
    ]
    .into_iter()
    .collect();
    let mut top1_ok = true;
    let mut top1_detail = String::new();
    assert_eq!(correct.as_array().unwrap().len(), 8, "one table per class");
    for entry in correct.as_array().unwrap() {
        let class = entry["class"].as_str().unwrap();
        let top = entry["objects"][0]["label"].as_str().unwrap_or("<none>");
        if !signatures[class].contains(&top) {
            top1_ok = false;
        }
        top1_detail.push_str(&format!("{class}: {top}; "));
    }

    let shape_note = if shape_ok { String::new() } else { format!(" (mismatches: {shape_detail})") };
    verdict(
        14,
        shape_ok && top1_ok,
        &format!(
            "row counts match min(10/5, distinct) for all 8 classes{shape_note}; top objects: {top1_detail}"
        ),
    );
}
