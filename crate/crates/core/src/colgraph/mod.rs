//! Column graphs: one node per column carrying ψ⁽⁰⁾, complete within each
//! block (a single block unless the table is partitioned), with self-loops.

mod pool;

use std::ops::Range;

pub use pool::{
    build_graph_pool, decode_pool, encode_pool, load_pool, pool_config_hash, pool_file_name, save_pool,
    GraphPool, PoolEntry, PoolMeta, PoolParams,
};

use crate::embed::ColumnEmbedding;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Directed edge `src -> dst`; messages flow from `src` into `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGraph {
    pub table_id: String,
    /// n x d, row i = ψ⁽⁰⁾ of node i.
    pub features: Tensor,
    pub edges: Vec<Edge>,
    /// Node index -> original column index.
    pub column_index: Vec<usize>,
}

impl ColumnGraph {
    pub fn new(table_id: impl Into<String>, features: Tensor, edges: Vec<Edge>) -> Result<Self> {
        let n = features.rows();
        if let Some(e) = edges.iter().find(|e| e.src >= n || e.dst >= n) {
            return Err(Error::validation(format!("edge {}->{} out of range for {n} nodes", e.src, e.dst)));
        }
        Ok(Self {
            table_id: table_id.into(),
            features,
            edges,
            column_index: (0..n).collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        self.edges.iter().for_each(|e| deg[e.dst] += 1);
        deg
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`. Edge order is
    /// kept, so per-node accumulation order is unchanged.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n);
        let mut features = Tensor::zeros(n, self.dim());
        let mut column_index = vec![0; n];
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
            column_index[perm[i]] = self.column_index[i];
        }
        Self {
            table_id: self.table_id.clone(),
            features,
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    src: perm[e.src],
                    dst: perm[e.dst],
                })
                .collect(),
            column_index,
        }
    }
}

/// Splits `0..n` into `ceil(n / block_size)` consecutive blocks whose sizes
/// differ by at most one (larger blocks first).
pub fn block_partition(n: usize, block_size: usize) -> Result<Vec<Range<usize>>> {
    if n == 0 {
        return Err(Error::invalid("cannot partition zero columns"));
    }
    if block_size < 2 {
        return Err(Error::invalid(format!("block size must be at least 2, got {block_size}")));
    }
    let k = n.div_ceil(block_size);
    let (q, r) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let len = q + usize::from(b < r);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

/// Builds the column graph. Within each block every ordered pair (u, v),
/// including u = v, becomes one edge; edges are grouped by destination.
pub fn construct_graph(table_id: &str, psi0: &[ColumnEmbedding], block_size: Option<usize>) -> Result<ColumnGraph> {
    let n = psi0.len();
    if n == 0 {
        return Err(Error::invalid("cannot build a graph with no columns"));
    }
    let d = psi0[0].dim();
    if let Some((i, e)) = psi0.iter().enumerate().find(|(_, e)| e.dim() != d) {
        return Err(Error::shape(format!("column {i} embedding has width {}, column 0 has {d}", e.dim())));
    }
    let blocks = match block_size {
        Some(b) => block_partition(n, b)?,
        None => vec![0..n],
    };
    let mut edges = Vec::with_capacity(blocks.iter().map(|b| b.len() * b.len()).sum());
    for block in &blocks {
        for dst in block.clone() {
            for src in block.clone() {
                edges.push(Edge { src, dst });
            }
        }
    }
    let features = Tensor::from_vec(n, d, psi0.iter().flat_map(|e| e.values.iter().copied()).collect())?;
    ColumnGraph::new(table_id, features, edges)
}
