//! Replays the checked-in fuzz seeds through each decoder with the same
//! invariants the fuzz targets assert, so corpus regressions show up in
//! ordinary test runs.

use std::fs;
use std::path::PathBuf;

use tabemb::colgraph::{decode_pool, encode_pool};
use tabemb::embed::{decode_cache_file, parse_embeddings_response};
use tabemb::pipeline::{decode_model, encode_model};
use tabemb::table::{parse_label_file, parse_record_line, LabelSpace, RawRecord, Task, TaskLabels};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn labels() -> TaskLabels {
    let mut l = TaskLabels::default();
    let space = |task, names: &[&str]| LabelSpace::new(task, names.iter().map(|s| s.to_string()).collect()).unwrap();
    l.set(space(Task::Cta, &["city", "year", "name"]));
    l.set(space(Task::Cpa, &["born_in", "located_in"]));
    l.set(space(Task::Tta, &["person", "place"]));
    l
}

#[test]
fn record_line_seeds() {
    let labels = labels();
    let mut parsed = 0;
    for (name, data) in seeds("record_line") {
        let text = std::str::from_utf8(&data).unwrap();
        if let Ok(t) = parse_record_line(text, &name, 1, &labels) {
            let line = serde_json::to_string(&RawRecord::from_annotated(&t, &labels)).unwrap();
            assert_eq!(parse_record_line(&line, &name, 1, &labels).unwrap(), t, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn label_file_seeds() {
    for (name, data) in seeds("label_file") {
        if let Ok(space) = parse_label_file(Task::Cta, std::str::from_utf8(&data).unwrap()) {
            let again = parse_label_file(Task::Cta, &space.labels().join("\n")).unwrap();
            assert_eq!(space.fingerprint(), again.fingerprint(), "{name}");
        }
    }
}

#[test]
fn pool_seeds_decode_and_round_trip() {
    for (name, data) in seeds("pool_decode") {
        let pool = decode_pool(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(encode_pool(&pool).unwrap(), data, "{name}");
        assert!(decode_pool(&data[..data.len() - 1]).is_err());
    }
}

#[test]
fn cache_seeds_decode() {
    for (name, data) in seeds("cache_decode") {
        let file = decode_cache_file(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(file.valid_len <= data.len());
        assert!(!file.records.is_empty(), "{name}");
    }
}

#[test]
fn checkpoint_seeds_decode_and_round_trip() {
    for (name, data) in seeds("checkpoint_decode") {
        let model = decode_model(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(encode_model(&model), data, "{name}");
    }
}

#[test]
fn embeddings_response_seeds() {
    for (name, data) in seeds("embeddings_response") {
        let [n, d, body @ ..] = data.as_slice() else { panic!("{name}: too short") };
        let (n, d) = (*n as usize % 8, *d as usize % 16 + 1);
        if let Ok(v) = parse_embeddings_response(body, n, d) {
            assert_eq!(v.len(), n);
            assert!(v.iter().all(|e| e.len() == d));
        }
    }
}

/// Random byte flips, truncations and splices of every binary seed; decoders
/// must return an error rather than panic.
#[test]
fn mutated_binary_seeds_never_panic() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for target in ["pool_decode", "cache_decode", "checkpoint_decode"] {
        for (_, data) in seeds(target) {
            for _ in 0..300 {
                let mut m = data.clone();
                match rng.random_range(0..3) {
                    0 => {
                        for _ in 0..rng.random_range(1..4) {
                            let i = rng.random_range(0..m.len());
                            m[i] ^= 1 << rng.random_range(0..8);
                        }
                    }
                    1 => m.truncate(rng.random_range(0..m.len())),
                    _ => {
                        let i = rng.random_range(0..m.len());
                        m.insert(i, rng.random());
                    }
                }
                match target {
                    "pool_decode" => drop(decode_pool(&m)),
                    "cache_decode" => drop(decode_cache_file(&m)),
                    _ => drop(decode_model(&m)),
                }
            }
        }
    }
}
