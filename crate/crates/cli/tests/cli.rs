use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn tabemb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabemb"))
        .args(args)
        .env_remove("TABEMB_CACHE_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tabemb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The path printed after `prefix` on one stdout line.
fn printed(stdout: &str, prefix: &str) -> PathBuf {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(|p| PathBuf::from(p.trim()))
        .unwrap_or_else(|| panic!("no {prefix:?} line in {stdout}"))
}

fn files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
        .collect();
    v.sort();
    v
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    pools: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let pools = root.join("pools");
    ok(&["synth", "--out", s(&data), "--train", "12", "--valid", "4", "--test", "3", "--seed", "7", "--ambiguity", "0.5"]);
    ok(&["embed", "--data", s(&data), "--out", s(&pools), "--backend", "local", "--dim", "32"]);
    Fixture {
        _dir: dir,
        root,
        data,
        pools,
    }
}

const SMALL: [&str; 6] = ["--dim", "32", "--hidden", "16", "--heads", "2"];

fn train(f: &Fixture, task: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let out = f.root.join("models");
    let mut args = vec!["train", "--data", s(&f.data), "--pools", s(&f.pools), "--task", task, "--out", s(&out)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    let stdout = ok(&args);
    (printed(&stdout, "checkpoint: "), printed(&stdout, "log: "))
}

#[test]
fn synth_writes_label_files_and_splits() {
    let f = fixture();
    for name in ["labels_cta.txt", "labels_cpa.txt", "labels_tta.txt", "train.jsonl", "valid.jsonl", "test.jsonl"] {
        assert!(f.data.join(name).is_file(), "{name}");
    }
    let test = fs::read_to_string(f.data.join("test.jsonl")).unwrap();
    assert_eq!(test.lines().count(), 3);
}

#[test]
fn embed_counts_and_idempotent_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let pools = dir.path().join("pools");
    ok(&["synth", "--out", s(&data), "--train", "5", "--valid", "2", "--test", "2"]);
    let first = ok(&["embed", "--data", s(&data), "--out", s(&pools), "--backend", "local", "--dim", "64"]);
    assert!(first.contains("train: 5 tables"), "{first}");
    assert!(first.contains("valid: 2 tables") && first.contains("test: 2 tables"));
    assert!(!first.contains("cache hit"));
    assert_eq!(files(&pools, "pool-").len(), 3);

    let second = ok(&["embed", "--data", s(&data), "--out", s(&pools), "--backend", "local", "--dim", "64"]);
    assert!(second.contains("cache hit, 0 embeddings computed"), "{second}");

    // a different m is a different configuration, so new pool files appear
    ok(&["embed", "--data", s(&data), "--out", s(&pools), "--dim", "64", "--m", "5"]);
    assert_eq!(files(&pools, "pool-").len(), 6);
}

#[test]
fn embed_missing_label_file_is_usage_error() {
    let f = fixture();
    fs::remove_file(f.data.join("labels_cpa.txt")).unwrap();
    let out = tabemb(&["embed", "--data", s(&f.data), "--out", s(&f.pools)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("labels_cpa.txt"));
}

#[test]
fn train_one_epoch_writes_checkpoint_and_log() {
    let f = fixture();
    let (ckpt, log) = train(&f, "cta", &["--epochs", "1"]);
    assert!(ckpt.is_file());
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(log).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 1);
    assert_eq!(log["ablation"], false);
    assert!(log["epochs"][0]["valid_micro_f1"].is_number());
}

#[test]
fn ablation_is_noted_and_training_is_reproducible() {
    let f = fixture();
    let (ckpt, log) = train(&f, "cta", &["--epochs", "2", "--variant", "none"]);
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(log).unwrap()).unwrap();
    assert_eq!(log["ablation"], true);
    let first = fs::read(&ckpt).unwrap();
    fs::remove_file(&ckpt).unwrap();
    let (again, _) = train(&f, "cta", &["--epochs", "2", "--variant", "none"]);
    assert_eq!(ckpt, again);
    assert_eq!(first, fs::read(&again).unwrap());
}

#[test]
fn train_rejects_pools_from_other_settings() {
    let f = fixture();
    let out = f.root.join("models");
    let mut args = vec!["train", "--data", s(&f.data), "--pools", s(&f.pools), "--task", "cta", "--out", s(&out)];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(&["--m", "5"]);
    let res = tabemb(&args);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("no train pool"));

    let empty = f.root.join("nothing");
    let res = tabemb(&["train", "--data", s(&f.data), "--pools", s(&empty), "--task", "cta", "--out", s(&out), "--dim", "32"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn config_file_feeds_settings_and_flags_win() {
    let f = fixture();
    let cfg = f.root.join("run.toml");
    fs::write(&cfg, "[embed]\ndim = 32\n[train]\nepochs = 1\nhidden = 16\nheads = 2\n").unwrap();
    let out = f.root.join("models");
    let base = ["--config", s(&cfg), "train", "--data", s(&f.data), "--pools", s(&f.pools), "--task", "tta", "--out", s(&out)];
    let stdout = ok(&base);
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(printed(&stdout, "log: ")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 1);

    let mut args = base.to_vec();
    args.extend_from_slice(&["--epochs", "2"]);
    let stdout = ok(&args);
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(printed(&stdout, "log: ")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 2);

    fs::write(&cfg, "[train]\nepoch = 1\n").unwrap();
    assert_eq!(code(&tabemb(&base)), 2);
}

#[test]
fn predict_cta_then_eval() {
    let f = fixture();
    let (ckpt, _) = train(&f, "cta", &["--epochs", "3"]);
    let preds = f.root.join("preds.jsonl");
    let logits = f.root.join("logits.jsonl");
    let input = f.data.join("test.jsonl");
    ok(&["predict", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&preds), "--logits", s(&logits)]);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&preds)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let tables: Vec<serde_json::Value> = fs::read_to_string(&input)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (p, t) in lines.iter().zip(&tables) {
        assert_eq!(p["table_id"], t["table_id"]);
        assert_eq!(p["cta"].as_array().unwrap().len(), t["columns"].as_array().unwrap().len());
    }
    assert_eq!(fs::read_to_string(&logits).unwrap().lines().count(), 3);

    let reports = f.root.join("reports");
    let stdout = ok(&["eval", "--data", s(&f.data), "--task", "cta", "--predictions", s(&preds), "--out", s(&reports)]);
    assert!(stdout.contains("micro-F1:"));
    assert!(printed(&stdout, "report: ").is_file());
}

#[test]
fn eval_of_gold_labels_is_perfect() {
    let f = fixture();
    // predictions copied from the gold labels of the test split
    let names: Vec<String> = fs::read_to_string(f.data.join("labels_tta.txt")).unwrap().lines().map(String::from).collect();
    let mut preds = String::new();
    for line in fs::read_to_string(f.data.join("test.jsonl")).unwrap().lines() {
        let t: serde_json::Value = serde_json::from_str(line).unwrap();
        let rec = serde_json::json!({ "table_id": t["table_id"], "tta": t["tta"] });
        assert!(names.contains(&rec["tta"].as_str().unwrap().to_string()));
        preds.push_str(&format!("{rec}\n"));
    }
    let path = f.root.join("gold.jsonl");
    fs::write(&path, preds).unwrap();
    let stdout = ok(&["eval", "--data", s(&f.data), "--task", "tta", "--predictions", s(&path), "--out", s(&f.root)]);
    assert!(stdout.contains("micro-F1: 1.0000"), "{stdout}");

    let res = tabemb(&["eval", "--data", s(&f.data), "--task", "cta", "--predictions", s(&path), "--out", s(&f.root)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn predict_cpa_with_pairs_file() {
    let f = fixture();
    let (ckpt, _) = train(&f, "cpa", &["--epochs", "1"]);
    let input = f.data.join("test.jsonl");
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&input).unwrap().lines().next().unwrap()).unwrap();
    let id = first["table_id"].as_str().unwrap();
    let pairs = f.root.join("pairs.jsonl");
    fs::write(&pairs, format!("{{\"table_id\": \"{id}\", \"pairs\": [[0, 1], [1, 0]]}}\n")).unwrap();
    let preds = f.root.join("cpa.jsonl");
    ok(&["predict", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&preds), "--pairs", s(&pairs)]);
    let line: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&preds).unwrap().lines().next().unwrap()).unwrap();
    let got = line["cpa"].as_array().unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!((got[0][0].as_u64(), got[0][1].as_u64()), (Some(0), Some(1)));
    assert_eq!((got[1][0].as_u64(), got[1][1].as_u64()), (Some(1), Some(0)));

    fs::write(&pairs, format!("{{\"table_id\": \"{id}\", \"pairs\": [[0, 0]]}}\n")).unwrap();
    let res = tabemb(&["predict", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&preds), "--pairs", s(&pairs)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn unknown_checkpoint_version_exits_2() {
    let f = fixture();
    let (ckpt, _) = train(&f, "tta", &["--epochs", "1"]);
    let mut bytes = fs::read(&ckpt).unwrap();
    let body = bytes.len() - 32;
    bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
    let digest = Sha256::digest(&bytes[..body]);
    bytes[body..].copy_from_slice(&digest);
    let future = f.root.join("future.ckpt");
    fs::write(&future, bytes).unwrap();
    let input = f.data.join("test.jsonl");
    let preds = f.root.join("p.jsonl");
    let res = tabemb(&["predict", "--checkpoint", s(&future), "--input", s(&input), "--out", s(&preds)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("version 99"));

    let bogus = f.root.join("bogus.ckpt");
    fs::write(&bogus, b"not a checkpoint at all, just some bytes padded out past a digest").unwrap();
    let res = tabemb(&["predict", "--checkpoint", s(&bogus), "--input", s(&input), "--out", s(&preds)]);
    assert_eq!(code(&res), 2);
    let missing = f.root.join("missing.ckpt");
    let res = tabemb(&["predict", "--checkpoint", s(&missing), "--input", s(&input), "--out", s(&preds)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn sweep_over_variants_has_four_rows() {
    let f = fixture();
    let out = f.root.join("sweep");
    let mut args = vec!["sweep", "--data", s(&f.data), "--out", s(&out), "--axes", "variant", "--epochs", "1"];
    args.extend_from_slice(&SMALL);
    ok(&args);
    let csv = files(&out, "sweep-").into_iter().find(|p| p.extension().unwrap() == "csv").unwrap();
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    for v in ["gat", "gcn", "ggnn", "none"] {
        assert!(text.lines().skip(1).any(|l| l.starts_with(&format!("variant,{v},"))), "{text}");
    }
}

#[test]
fn heatmap_and_embedding_export() {
    let f = fixture();
    let (gat, _) = train(&f, "cta", &["--epochs", "1"]);
    let out = f.root.join("reports");
    let stdout = ok(&["heatmap", "--checkpoint", s(&gat), "--data", s(&f.data), "--split", "train", "--out", s(&out)]);
    let csv = fs::read_to_string(printed(&stdout, "heatmap: ")).unwrap();
    assert!(csv.starts_with('#'));

    let stdout = ok(&["export-embeddings", "--checkpoint", s(&gat), "--data", s(&f.data), "--out", s(&out)]);
    let tsv = fs::read_to_string(printed(&stdout, "embeddings: ")).unwrap();
    assert!(tsv.starts_with("table_id\tcolumn\tlabel\tstage\tvector"));

    let (gcn, _) = train(&f, "cta", &["--epochs", "1", "--variant", "gcn"]);
    let res = tabemb(&["heatmap", "--checkpoint", s(&gcn), "--data", s(&f.data), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&tabemb(&["train", "--bogus"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let res = tabemb(&["synth", "--out", s(dir.path()), "--ambiguity", "1.5"]);
    assert_eq!(code(&res), 2);
}
