use std::collections::HashSet;

use proptest::prelude::*;
use tabemb::colgraph::{build_graph_pool, construct_graph, GraphPool, PoolEntry, PoolMeta, PoolParams};
use tabemb::embed::{ColumnEmbedding, LocalHashBackend};
use tabemb::eval::synth::TOPICS;
use tabemb::eval::{
    attention_heatmap, embeddings_tsv, freq_stratified_f1, generate_synthetic, micro_f1, run_ablation_sweep, SweepAxis,
    SweepSpec, SynthConfig,
};
use tabemb::nn::{GnnConfig, Network, NetworkConfig, Variant};
use tabemb::pipeline::{evaluate_pool, train, TrainConfig};
use tabemb::table::{write_dataset, LabelSpace, Task};

/// Brute-force TP/FP/FN tally over every class that appears anywhere.
fn oracle_micro_f1(preds: &[usize], golds: &[usize]) -> f64 {
    let classes: HashSet<usize> = preds.iter().chain(golds).copied().collect();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for c in classes {
        for (&p, &g) in preds.iter().zip(golds) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn micro_f1_matches_counting_oracle(pairs in prop::collection::vec((0usize..6, 0usize..6), 1..60)) {
        let (preds, golds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let f1 = micro_f1(&preds, &golds).unwrap();
        prop_assert_eq!(f1, oracle_micro_f1(&preds, &golds));
        let acc = preds.iter().zip(&golds).filter(|(p, g)| p == g).count() as f64 / preds.len() as f64;
        prop_assert!((f1 - acc).abs() < 1e-12);
    }
}

#[test]
fn stratified_f1_hand_computed() {
    // class 0: tp 2, fn 1; class 1: tp 1, fp 1, fn 1; class 2: tp 1, fp 1.
    let golds = [0, 0, 0, 1, 1, 2];
    let preds = [0, 0, 1, 1, 2, 2];
    let bins = freq_stratified_f1(&preds, &golds, &[5, 9, 1]).unwrap();
    let f0 = 4.0 / 5.0;
    let f1 = 2.0 / 4.0;
    let f2 = 2.0 / 3.0;
    assert_eq!(bins[0].classes, vec![1]);
    assert_eq!(bins[1].classes, vec![0]);
    assert_eq!(bins[2].classes, vec![2]);
    for (bin, want) in bins.iter().zip([f1, f0, f2]) {
        assert!((bin.mean_f1.unwrap() - want).abs() < 1e-15);
    }
}

fn gat(d: usize, n_labels: usize, seed: u64) -> Network {
    Network::new(
        NetworkConfig {
            gnn: GnnConfig {
                variant: Variant::Gat,
                input_dim: d,
                hidden: 8,
                depth: 2,
                heads: 2,
            },
            task: Task::Cta,
            n_labels,
        },
        seed,
    )
    .unwrap()
}

fn hand_pool(tables: &[Vec<(Vec<f64>, Option<usize>)>]) -> GraphPool {
    let entries = tables
        .iter()
        .enumerate()
        .map(|(i, cols)| {
            let psi0: Vec<ColumnEmbedding> = cols.iter().map(|(v, _)| ColumnEmbedding::initial(v.clone())).collect();
            PoolEntry {
                graph: construct_graph(&format!("t{i}"), &psi0, None).unwrap(),
                cta: Some(cols.iter().map(|c| c.1).collect()),
                cpa: None,
                tta: None,
            }
        })
        .collect();
    GraphPool {
        meta: PoolMeta {
            config_hash: [0; 32],
            backend_id: "hand".into(),
            dim: tables[0][0].0.len(),
            params: PoolParams::default(),
            label_fingerprints: [None; 3],
        },
        entries,
    }
}

fn space(names: &[&str]) -> LabelSpace {
    LabelSpace::new(Task::Cta, names.iter().map(|s| s.to_string()).collect()).unwrap()
}

#[test]
fn heatmap_single_column_tables_are_diagonal() {
    let pool = hand_pool(&[vec![(vec![1.0, 0.0], Some(0))], vec![(vec![0.0, 1.0], Some(1))], vec![(vec![0.5, 0.5], Some(1))]]);
    let h = attention_heatmap(&gat(2, 2, 0), &pool, &space(&["a", "b"])).unwrap();
    assert!((h.get(0, 0).unwrap() - 1.0).abs() < 1e-12);
    assert!((h.get(1, 1).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(h.get(0, 1), None);
    assert_eq!(h.get(1, 0), None);
    let csv = h.to_csv();
    assert!(csv.lines().nth(1).unwrap() == "class,a,b");
    assert!(csv.contains("a,1.000000,\n"));
}

#[test]
fn heatmap_matches_hand_aggregation() {
    let pool = hand_pool(&[
        vec![(vec![1.0, 0.2, 0.0], Some(0)), (vec![0.0, 1.0, 0.3], Some(1))],
        vec![(vec![0.9, 0.1, 0.1], Some(0)), (vec![0.1, 0.8, 0.5], Some(1)), (vec![0.2, 0.2, 0.9], Some(2))],
        vec![(vec![0.7, 0.0, 0.4], Some(0)), (vec![0.3, 0.9, 0.0], Some(1))],
    ]);
    let net = gat(3, 3, 4);
    let h = attention_heatmap(&net, &pool, &space(&["x", "y", "z"])).unwrap();
    let mut expected = [[0.0; 3]; 3];
    let mut counts = [0usize; 3];
    for entry in &pool.entries {
        let labels = entry.cta.as_ref().unwrap();
        labels.iter().flatten().for_each(|&l| counts[l] += 1);
        let alpha = &net.attention(&entry.graph).unwrap()[0];
        for (e, edge) in entry.graph.edges.iter().enumerate() {
            let mean = (alpha.get(e, 0) + alpha.get(e, 1)) / 2.0;
            expected[labels[edge.dst].unwrap()][labels[edge.src].unwrap()] += mean;
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            let want = expected[a][b] / counts[a] as f64;
            match h.get(a, b) {
                Some(v) => assert!((v - want).abs() < 1e-6),
                None => assert_eq!(want, 0.0),
            }
        }
        assert!((h.row_sum(a) - 1.0).abs() < 1e-6, "row {a}");
    }
    // z appears only in table 1, next to x and y.
    assert!(h.get(0, 2).is_some() && h.get(2, 2).is_some());
}

#[test]
fn heatmap_needs_gat() {
    let pool = hand_pool(&[vec![(vec![1.0, 0.0], Some(0))]]);
    let mut net = gat(2, 1, 0);
    net.config.gnn.variant = Variant::Gcn;
    let err = attention_heatmap(&net, &pool, &space(&["a"])).unwrap_err();
    assert!(err.is_usage());
}

#[test]
fn synthetic_is_deterministic_on_disk() {
    let cfg = SynthConfig {
        train_tables: 30,
        valid_tables: 5,
        test_tables: 5,
        seed: 7,
        ..SynthConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(a.path(), &generate_synthetic(&cfg).unwrap()).unwrap();
    write_dataset(b.path(), &generate_synthetic(&cfg).unwrap()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap());
    }
    let other = generate_synthetic(&SynthConfig { seed: 8, ..cfg.clone() }).unwrap();
    assert_ne!(other.train[0].table, generate_synthetic(&cfg).unwrap().train[0].table);
}

fn is_four_digit(s: &str) -> bool {
    s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) && !s.starts_with('0')
}

/// Independent rule: a 4-digit column is a "year" next to a person name or
/// film title, "price_cents" next to a product or restaurant, otherwise a
/// "postal_code".
#[test]
fn ambiguous_labels_follow_the_companion_rule() {
    let ds = generate_synthetic(&SynthConfig {
        train_tables: 600,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let cta = ds.labels.cta.as_ref().unwrap();
    let rule = |anchor: &str| match anchor {
        "person_name" | "film_title" => "year",
        "product_name" | "restaurant_name" => "price_cents",
        "city" | "tracking_id" => "postal_code",
        other => panic!("not an anchor: {other}"),
    };
    let anchors: Vec<&str> = TOPICS.iter().map(|t| t.anchor.0).collect();
    let mut counts = std::collections::BTreeMap::new();
    let mut n_amb = 0;
    for t in &ds.train {
        let labels: Vec<&str> = t.cta.as_ref().unwrap().iter().map(|l| cta.label(l.unwrap()).unwrap()).collect();
        let anchor = labels.iter().find(|l| anchors.contains(l)).unwrap();
        for (col, label) in t.table.columns().iter().zip(&labels) {
            let values: Vec<&str> = col.non_null().collect();
            if !values.is_empty() && values.iter().all(|v| is_four_digit(v)) {
                assert_eq!(*label, rule(anchor));
                *counts.entry(*label).or_insert(0usize) += 1;
                n_amb += 1;
            } else if ["year", "price_cents", "postal_code"].contains(label) {
                assert!(values.is_empty());
            }
        }
    }
    // Each ambiguous label is drawn uniformly, so a column-only predictor
    // cannot beat 1/3 on these columns.
    for (_, c) in counts {
        let share = c as f64 / n_amb as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.05, "share {share}");
    }
}

#[test]
fn no_ambiguity_needs_no_structure() {
    let ds = generate_synthetic(&SynthConfig {
        ambiguity_rate: 0.0,
        train_tables: 150,
        valid_tables: 0,
        test_tables: 60,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = LocalHashBackend::new(64).unwrap();
    let p = PoolParams::default();
    let tr = build_graph_pool(&ds.train, &ds.labels, &b, &p, None).unwrap();
    let te = build_graph_pool(&ds.test, &ds.labels, &b, &p, None).unwrap();
    let cfg = TrainConfig {
        variant: Variant::None,
        hidden: 64,
        epochs: 60,
        batch_size: 32,
        ..TrainConfig::new(Task::Cta)
    };
    let (model, _) = train(&tr, ds.labels.cta.as_ref().unwrap(), &cfg, None).unwrap();
    let f1 = evaluate_pool(&model.network, &te, Task::Cta).unwrap().unwrap();
    assert!(f1 > 0.95, "no-GNN micro-F1 {f1}");
}

#[test]
fn sweep_rows_and_failed_cells() {
    let ds = generate_synthetic(&SynthConfig {
        train_tables: 12,
        valid_tables: 4,
        test_tables: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = LocalHashBackend::new(16).unwrap();
    let base = TrainConfig {
        epochs: 1,
        hidden: 8,
        heads: 2,
        ..TrainConfig::new(Task::Cta)
    };
    let spec = SweepSpec {
        axes: vec![SweepAxis::Variant],
        tasks: vec![Task::Cta],
        ..SweepSpec::default()
    };
    let report = run_ablation_sweep(&ds, &base, &spec, &b, None).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.iter().all(|r| r.status == "ok" && r.micro_f1.unwrap().is_finite()));
    assert_eq!(report.to_csv().lines().count(), 5);
    assert_eq!(report.to_markdown().lines().count(), 6);

    let spec = SweepSpec {
        axes: vec![SweepAxis::Depth],
        tasks: vec![Task::Tta],
        depths: vec![0, 1],
        ..SweepSpec::default()
    };
    let report = run_ablation_sweep(&ds, &base, &spec, &b, None).unwrap();
    assert!(report.rows[0].status.starts_with("failed"));
    assert_eq!(report.rows[1].status, "ok");
}

#[test]
fn embeddings_export_has_both_stages() {
    let ds = generate_synthetic(&SynthConfig {
        train_tables: 3,
        valid_tables: 0,
        test_tables: 0,
        ..SynthConfig::default()
    })
    .unwrap();
    let b = LocalHashBackend::new(16).unwrap();
    let pool = build_graph_pool(&ds.train, &ds.labels, &b, &PoolParams::default(), None).unwrap();
    let net = gat(16, 3, 1);
    let tsv = embeddings_tsv(&net, &pool, ds.labels.cta.as_ref()).unwrap();
    let cols: usize = pool.entries.iter().map(|e| e.graph.n_nodes()).sum();
    assert_eq!(tsv.lines().count(), 1 + 2 * cols);
    let first = tsv.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split('\t').collect();
    assert_eq!(fields[3], "initial");
    assert_eq!(fields[4].split(' ').count(), 16);
    assert!(!fields[2].is_empty());
}
