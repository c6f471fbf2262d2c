use crate::colgraph::GraphPool;
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor, Variant};
use crate::table::LabelSpace;

pub const HEATMAP_SCHEME: &str =
    "first-layer GAT attention, mean over heads; cell (a,b) = total attention from class-a columns to class-b columns / number of class-a columns";

/// Class-by-class attention mass. `None` marks pairs never connected by an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Number of labeled columns per class across the pool.
    pub node_counts: Vec<usize>,
}

impl HeatmapMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.cells[a][b]
    }

    /// Sum of row `a` over observed cells.
    pub fn row_sum(&self, a: usize) -> f64 {
        self.cells[a].iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: &str| {
            if s.contains([',', '"', '\n']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let mut out = format!("# {HEATMAP_SCHEME}; empty cell = no co-occurrence\nclass");
        for l in &self.labels {
            out.push(',');
            out.push_str(&quote(l));
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.cells) {
            out.push_str(&quote(label));
            for cell in row {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&format!("{v:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accumulates first-layer attention over every graph of `pool` into CTA
/// class cells. Columns without a CTA label are skipped on both ends.
pub fn attention_heatmap(net: &Network, pool: &GraphPool, labels: &LabelSpace) -> Result<HeatmapMatrix> {
    if net.config.gnn.variant != Variant::Gat {
        return Err(Error::Unsupported {
            model: net.config.gnn.variant.to_string(),
            message: "attention heatmaps need a GAT model".into(),
        });
    }
    let c = labels.len();
    let mut sums = vec![vec![0.0; c]; c];
    let mut seen = vec![vec![false; c]; c];
    let mut node_counts = vec![0usize; c];
    for entry in &pool.entries {
        let Some(cta) = &entry.cta else { continue };
        if cta.len() != entry.graph.n_nodes() {
            return Err(Error::validation(format!("table {}: CTA labels do not match its columns", entry.graph.table_id)));
        }
        if let Some(l) = cta.iter().flatten().find(|&&l| l >= c) {
            return Err(Error::validation(format!("label ordinal {l} outside the CTA label space")));
        }
        cta.iter().flatten().for_each(|&l| node_counts[l] += 1);
        let attention = net.attention(&entry.graph)?;
        let first: &Tensor = &attention[0];
        let heads = first.cols() as f64;
        for (e, edge) in entry.graph.edges.iter().enumerate() {
            let (Some(a), Some(b)) = (cta[edge.dst], cta[edge.src]) else { continue };
            sums[a][b] += first.row(e).iter().sum::<f64>() / heads;
            seen[a][b] = true;
        }
    }
    let cells = (0..c)
        .map(|a| (0..c).map(|b| seen[a][b].then(|| sums[a][b] / node_counts[a] as f64)).collect())
        .collect();
    Ok(HeatmapMatrix {
        labels: labels.labels().to_vec(),
        cells,
        node_counts,
    })
}
