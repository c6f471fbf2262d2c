//! Precomputed labeled graphs for one dataset split.
//!
//! The pool is the only input training reads, so the embedding backend is
//! never touched during gradient descent. Binary layout (little-endian,
//! SHA-256 of the body appended):
//!
//! ```text
//! b"TEPOOL01" | version u32 | config_hash [32] | backend_id str | m u64 | seed u64
//! | block_size u64 (0 = none) | dim u64
//! | 3 x (present u8 [, label-space fingerprint [32]])      cta, cpa, tta
//! | entries u64
//! | per entry: table_id str | n u64 | n*dim f32 features
//!              | edges u64 | edges x (src u32, dst u32) | n x column index u32
//!              | cta: present u8 [, n x u32 (u32::MAX = unlabeled)]
//!              | cpa: present u8 [, count u64, count x (subject u32, object u32, label u32)]
//!              | tta: present u8 [, u32]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{construct_graph, ColumnGraph, Edge};
use crate::codec::{sha256, short_hex, ByteReader, ByteWriter};
use crate::embed::{column_embeddings, EmbeddingBackend, EmbeddingCache};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::table::{AnnotatedTable, PairLabel, RawRecord, Task, TaskLabels};

const MAGIC: &[u8; 8] = b"TEPOOL01";
const VERSION: u32 = 1;
const UNLABELED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolParams {
    pub m: usize,
    pub seed: u64,
    pub block_size: Option<usize>,
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            m: 25,
            seed: 0,
            block_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolMeta {
    pub config_hash: [u8; 32],
    pub backend_id: String,
    pub dim: usize,
    pub params: PoolParams,
    /// Fingerprints of the label spaces the ordinals refer to (cta, cpa, tta).
    pub label_fingerprints: [Option<[u8; 32]>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub graph: ColumnGraph,
    pub cta: Option<Vec<Option<usize>>>,
    pub cpa: Option<Vec<PairLabel>>,
    pub tta: Option<usize>,
}

impl PoolEntry {
    pub fn has_labels(&self, task: Task) -> bool {
        match task {
            Task::Cta => self.cta.as_ref().is_some_and(|v| v.iter().any(Option::is_some)),
            Task::Cpa => self.cpa.as_ref().is_some_and(|v| !v.is_empty()),
            Task::Tta => self.tta.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPool {
    pub meta: PoolMeta,
    pub entries: Vec<PoolEntry>,
}

impl GraphPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors unless the pool's label ordinals refer to `labels`' space for `task`.
    pub fn check_labels(&self, task: Task, labels: &TaskLabels) -> Result<()> {
        let expected = labels.require(task)?.fingerprint();
        match self.meta.label_fingerprints[task.code() as usize] {
            Some(fp) if fp == expected => Ok(()),
            Some(_) => Err(Error::validation(format!("pool was built against a different {task} label space"))),
            None => Err(Error::validation(format!("pool carries no {task} labels"))),
        }
    }
}

/// Hash over every input that determines the pool's bytes.
pub fn pool_config_hash(
    tables: &[AnnotatedTable],
    labels: &TaskLabels,
    backend_id: &str,
    dim: usize,
    params: &PoolParams,
) -> [u8; 32] {
    let mut w = ByteWriter::new();
    w.str("tabemb-pool");
    w.u32(VERSION);
    w.str(backend_id);
    w.usize(dim);
    w.usize(params.m);
    w.u64(params.seed);
    w.usize(params.block_size.unwrap_or(0));
    for task in Task::ALL {
        match labels.get(task) {
            Some(s) => w.bytes(&s.fingerprint()),
            None => w.u8(0),
        }
    }
    for t in tables {
        let line = serde_json::to_string(&RawRecord::from_annotated(t, labels)).expect("record serializes");
        w.str(&line);
    }
    sha256(&w.into_inner())
}

pub fn pool_file_name(split: &str, config_hash: &[u8; 32]) -> String {
    format!("pool-{split}-{}.bin", short_hex(config_hash))
}

/// Embeds every table (cache first) and builds its column graph, in split order.
pub fn build_graph_pool(
    split: &[AnnotatedTable],
    labels: &TaskLabels,
    backend: &dyn EmbeddingBackend,
    params: &PoolParams,
    cache: Option<&EmbeddingCache>,
) -> Result<GraphPool> {
    if split.is_empty() {
        return Err(Error::invalid("cannot build a graph pool from an empty split"));
    }
    let mut entries = Vec::with_capacity(split.len());
    for t in split {
        let psi0 = column_embeddings(&t.table, backend, params.m, params.seed, cache)?;
        let graph = construct_graph(t.table.id(), &psi0, params.block_size)?;
        entries.push(PoolEntry {
            graph,
            cta: t.cta.clone(),
            cpa: t.cpa.clone(),
            tta: t.tta,
        });
    }
    let label_fingerprints = Task::ALL.map(|task| labels.get(task).map(|s| s.fingerprint()));
    Ok(GraphPool {
        meta: PoolMeta {
            config_hash: pool_config_hash(split, labels, backend.backend_id(), backend.dim(), params),
            backend_id: backend.backend_id().to_string(),
            dim: backend.dim(),
            params: *params,
            label_fingerprints,
        },
        entries,
    })
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit in u32")))
}

pub fn encode_pool(pool: &GraphPool) -> Result<Vec<u8>> {
    let meta = &pool.meta;
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.bytes(&meta.config_hash);
    w.str(&meta.backend_id);
    w.usize(meta.params.m);
    w.u64(meta.params.seed);
    w.usize(meta.params.block_size.unwrap_or(0));
    w.usize(meta.dim);
    for fp in &meta.label_fingerprints {
        match fp {
            Some(fp) => {
                w.u8(1);
                w.bytes(fp);
            }
            None => w.u8(0),
        }
    }
    w.usize(pool.entries.len());
    for e in &pool.entries {
        let g = &e.graph;
        if g.dim() != meta.dim {
            return Err(Error::shape(format!("graph {} has width {}, pool has {}", g.table_id, g.dim(), meta.dim)));
        }
        w.str(&g.table_id);
        w.usize(g.n_nodes());
        g.features.data().iter().for_each(|&x| w.f32(x as f32));
        w.usize(g.edges.len());
        for edge in &g.edges {
            w.u32(to_u32(edge.src, "node")?);
            w.u32(to_u32(edge.dst, "node")?);
        }
        for &c in &g.column_index {
            w.u32(to_u32(c, "column")?);
        }
        match &e.cta {
            Some(v) => {
                w.u8(1);
                for o in v {
                    w.u32(match o {
                        Some(o) => to_u32(*o, "label")?,
                        None => UNLABELED,
                    });
                }
            }
            None => w.u8(0),
        }
        match &e.cpa {
            Some(v) => {
                w.u8(1);
                w.usize(v.len());
                for p in v {
                    w.u32(to_u32(p.subject, "column")?);
                    w.u32(to_u32(p.object, "column")?);
                    w.u32(to_u32(p.label, "label")?);
                }
            }
            None => w.u8(0),
        }
        match e.tta {
            Some(o) => {
                w.u8(1);
                w.u32(to_u32(o, "label")?);
            }
            None => w.u8(0),
        }
    }
    Ok(w.finish_with_digest())
}

fn flag(r: &mut ByteReader<'_>) -> Result<bool> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::format(format!("graph pool: bad presence flag {other}"))),
    }
}

pub fn decode_pool(bytes: &[u8]) -> Result<GraphPool> {
    let mut r = ByteReader::with_digest(bytes, "graph pool")?;
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("graph pool: unsupported version {version}")));
    }
    let config_hash = r.array::<32>()?;
    let backend_id = r.str()?;
    let m = r.usize()?;
    let seed = r.u64()?;
    let block_size = match r.usize()? {
        0 => None,
        b => Some(b),
    };
    let dim = r.usize()?;
    let mut label_fingerprints = [None; 3];
    for fp in label_fingerprints.iter_mut() {
        if flag(&mut r)? {
            *fp = Some(r.array::<32>()?);
        }
    }
    let count = r.count(8)?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let table_id = r.str()?;
        let n = r.count(4usize.saturating_mul(dim).max(1))?;
        if n == 0 {
            return Err(Error::format("graph pool: graph with zero nodes"));
        }
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            data.push(r.f32()? as f64);
        }
        let features = Tensor::from_vec(n, dim, data)?;
        let n_edges = r.count(8)?;
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let src = r.u32()? as usize;
            let dst = r.u32()? as usize;
            if src >= n || dst >= n {
                return Err(Error::format(format!("graph pool: edge {src}->{dst} out of range in {table_id}")));
            }
            edges.push(Edge { src, dst });
        }
        let mut column_index = Vec::with_capacity(n);
        for _ in 0..n {
            column_index.push(r.u32()? as usize);
        }
        let cta = if flag(&mut r)? {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let o = r.u32()?;
                v.push((o != UNLABELED).then_some(o as usize));
            }
            Some(v)
        } else {
            None
        };
        let cpa = if flag(&mut r)? {
            let k = r.count(12)?;
            let mut v = Vec::with_capacity(k);
            for _ in 0..k {
                let subject = r.u32()? as usize;
                let object = r.u32()? as usize;
                let label = r.u32()? as usize;
                if subject >= n || object >= n || subject == object {
                    return Err(Error::format(format!("graph pool: bad cpa pair in {table_id}")));
                }
                v.push(PairLabel { subject, object, label });
            }
            Some(v)
        } else {
            None
        };
        let tta = if flag(&mut r)? { Some(r.u32()? as usize) } else { None };
        entries.push(PoolEntry {
            graph: ColumnGraph {
                table_id,
                features,
                edges,
                column_index,
            },
            cta,
            cpa,
            tta,
        });
    }
    r.expect_end()?;
    Ok(GraphPool {
        meta: PoolMeta {
            config_hash,
            backend_id,
            dim,
            params: PoolParams { m, seed, block_size },
            label_fingerprints,
        },
        entries,
    })
}

pub fn save_pool(dir: &Path, split: &str, pool: &GraphPool) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(pool_file_name(split, &pool.meta.config_hash));
    let tmp = path.with_extension("bin.tmp");
    fs::write(&tmp, encode_pool(pool)?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn load_pool(path: &Path) -> Result<GraphPool> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_pool(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::LocalHashBackend;
    use crate::table::{Column, LabelSpace, Table};

    fn split() -> (Vec<AnnotatedTable>, TaskLabels) {
        let mut labels = TaskLabels::default();
        labels.set(LabelSpace::new(Task::Cta, vec!["city".into(), "year".into()]).unwrap());
        labels.set(LabelSpace::new(Task::Cpa, vec!["founded".into()]).unwrap());
        let t1 = Table::new(
            "a",
            vec![Column::from_strs(&["Paris", "Rome"]), Column::from_strs(&["1999", "2000"])],
        )
        .unwrap();
        let t2 = Table::new("b", vec![Column::from_strs(&["Oslo"])]).unwrap();
        let tables = vec![
            AnnotatedTable {
                table: t1,
                cta: Some(vec![Some(0), None]),
                cpa: Some(vec![PairLabel { subject: 0, object: 1, label: 0 }]),
                tta: None,
            },
            AnnotatedTable {
                table: t2,
                cta: Some(vec![Some(0)]),
                cpa: None,
                tta: None,
            },
        ];
        (tables, labels)
    }

    #[test]
    fn one_graph_per_table_and_round_trip() {
        let (tables, labels) = split();
        let backend = LocalHashBackend::new(16).unwrap();
        let pool = build_graph_pool(&tables, &labels, &backend, &PoolParams::default(), None).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.entries[0].graph.edges.len(), 4);
        let bytes = encode_pool(&pool).unwrap();
        assert_eq!(decode_pool(&bytes).unwrap(), pool);
        pool.check_labels(Task::Cta, &labels).unwrap();
        assert!(pool.check_labels(Task::Tta, &labels).is_err());
    }

    #[test]
    fn warm_rebuild_is_byte_identical() {
        let (tables, labels) = split();
        let backend = LocalHashBackend::new(16).unwrap();
        let cache = EmbeddingCache::in_memory(backend.backend_id(), 16);
        let params = PoolParams::default();
        let cold = encode_pool(&build_graph_pool(&tables, &labels, &backend, &params, Some(&cache)).unwrap()).unwrap();
        let warm = encode_pool(&build_graph_pool(&tables, &labels, &backend, &params, Some(&cache)).unwrap()).unwrap();
        assert_eq!(sha256(&cold), sha256(&warm));
        let uncached = encode_pool(&build_graph_pool(&tables, &labels, &backend, &params, None).unwrap()).unwrap();
        assert_eq!(cold, uncached);
    }

    #[test]
    fn empty_split_is_an_error() {
        let (_, labels) = split();
        let backend = LocalHashBackend::new(16).unwrap();
        assert!(build_graph_pool(&[], &labels, &backend, &PoolParams::default(), None).is_err());
    }

    #[test]
    fn config_hash_tracks_parameters() {
        let (tables, labels) = split();
        let p = PoolParams::default();
        let h = pool_config_hash(&tables, &labels, "x", 16, &p);
        assert_eq!(h, pool_config_hash(&tables, &labels, "x", 16, &p));
        assert_ne!(h, pool_config_hash(&tables, &labels, "y", 16, &p));
        assert_ne!(h, pool_config_hash(&tables, &labels, "x", 16, &PoolParams { m: 5, ..p }));
        assert_ne!(h, pool_config_hash(&tables, &labels, "x", 16, &PoolParams { block_size: Some(3), ..p }));
        assert_ne!(h, pool_config_hash(&tables[..1], &labels, "x", 16, &p));
    }

    #[test]
    fn truncated_pool_is_rejected() {
        let (tables, labels) = split();
        let backend = LocalHashBackend::new(16).unwrap();
        let bytes = encode_pool(&build_graph_pool(&tables, &labels, &backend, &PoolParams::default(), None).unwrap()).unwrap();
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_pool(&bytes[..cut]).is_err());
        }
    }
}
