use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use tracing::{info, warn};

use crate::colgraph::{build_graph_pool, GraphPool, PoolParams};
use crate::embed::{EmbeddingBackend, EmbeddingCache};
use crate::error::{Error, Result};
use crate::nn::Variant;
use crate::pipeline::{evaluate_pool, train, TrainConfig};
use crate::table::{Dataset, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Variant,
    Depth,
    M,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Variant => "variant",
            SweepAxis::Depth => "depth",
            SweepAxis::M => "m",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "variant" => Ok(SweepAxis::Variant),
            "depth" | "s" => Ok(SweepAxis::Depth),
            "m" => Ok(SweepAxis::M),
            other => Err(Error::invalid(format!("unknown sweep axis {other:?} (expected variant, depth or m)"))),
        }
    }
}

/// One-factor-at-a-time grid around a base configuration.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub tasks: Vec<Task>,
    pub variants: Vec<Variant>,
    pub depths: Vec<usize>,
    pub ms: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axes: vec![SweepAxis::Variant, SweepAxis::Depth, SweepAxis::M],
            tasks: Task::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            depths: vec![1, 2, 3, 4],
            ms: vec![5, 15, 25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub task: String,
    pub variant: String,
    pub depth: usize,
    pub m: usize,
    pub seed: u64,
    pub micro_f1: Option<f64>,
    pub runtime_secs: f64,
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,task,variant,depth,m,seed,micro_f1,runtime_secs,status\n");
        for r in &self.rows {
            let f1 = r.micro_f1.map_or_else(String::new, |v| format!("{v:.4}"));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{f1},{:.2},\"{}\"\n",
                r.axis,
                r.value,
                r.task,
                r.variant,
                r.depth,
                r.m,
                r.seed,
                r.runtime_secs,
                r.status.replace('"', "\"\"")
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| axis | value | task | micro-F1 | seed | runtime (s) | status |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let f1 = r.micro_f1.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "| {} | {} | {} | {f1} | {} | {:.2} | {} |\n",
                r.axis, r.value, r.task, r.seed, r.runtime_secs, r.status
            ));
        }
        out
    }
}

struct Pools {
    train: GraphPool,
    valid: Option<GraphPool>,
    test: Option<GraphPool>,
}

fn build_pools(dataset: &Dataset, backend: &dyn EmbeddingBackend, params: &PoolParams, cache: Option<&EmbeddingCache>) -> Result<Pools> {
    let build = |split: &[_]| build_graph_pool(split, &dataset.labels, backend, params, cache);
    Ok(Pools {
        train: build(&dataset.train)?,
        valid: (!dataset.valid.is_empty()).then(|| build(&dataset.valid)).transpose()?,
        test: (!dataset.test.is_empty()).then(|| build(&dataset.test)).transpose()?,
    })
}

fn run_cell(pools: &Pools, config: &TrainConfig, dataset: &Dataset) -> Result<Option<f64>> {
    let labels = dataset.labels.require(config.task)?;
    let (model, _) = train(&pools.train, labels, config, pools.valid.as_ref())?;
    let eval_pool = pools.test.as_ref().or(pools.valid.as_ref()).unwrap_or(&pools.train);
    evaluate_pool(&model.network, eval_pool, config.task)
}

/// Trains and scores every cell. Failures are recorded in the row's status
/// instead of aborting the sweep.
pub fn run_ablation_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    spec: &SweepSpec,
    backend: &dyn EmbeddingBackend,
    cache: Option<&EmbeddingCache>,
) -> Result<SweepReport> {
    base.validate()?;
    let mut cells: Vec<(SweepAxis, String, TrainConfig)> = Vec::new();
    for &axis in &spec.axes {
        match axis {
            SweepAxis::Variant => {
                for &v in &spec.variants {
                    cells.push((axis, v.to_string(), TrainConfig { variant: v, ..base.clone() }));
                }
            }
            SweepAxis::Depth => {
                for &d in &spec.depths {
                    cells.push((axis, d.to_string(), TrainConfig { depth: d, ..base.clone() }));
                }
            }
            SweepAxis::M => {
                for &m in &spec.ms {
                    cells.push((axis, m.to_string(), TrainConfig { m, ..base.clone() }));
                }
            }
        }
    }
    let tasks: Vec<Task> = spec
        .tasks
        .iter()
        .copied()
        .filter(|&t| dataset.labels.get(t).is_some())
        .collect();
    if tasks.is_empty() {
        return Err(Error::validation("dataset has labels for none of the requested tasks"));
    }

    let mut pools: BTreeMap<usize, std::result::Result<Pools, String>> = BTreeMap::new();
    let mut report = SweepReport::default();
    for (axis, value, cell) in cells {
        let params = PoolParams {
            m: cell.m,
            seed: cell.seed,
            block_size: cell.block_size,
        };
        let entry = pools
            .entry(cell.m)
            .or_insert_with(|| build_pools(dataset, backend, &params, cache).map_err(|e| e.to_string()));
        for &task in &tasks {
            let config = TrainConfig { task, ..cell.clone() };
            let start = Instant::now();
            let outcome = match entry {
                Ok(p) => run_cell(p, &config, dataset).map_err(|e| e.to_string()),
                Err(e) => Err(format!("pool build failed: {e}")),
            };
            let runtime = start.elapsed().as_secs_f64();
            let (f1, status) = match outcome {
                Ok(Some(f1)) => (Some(f1), "ok".to_string()),
                Ok(None) => (None, "no labeled evaluation targets".to_string()),
                Err(e) => {
                    warn!(%axis, %value, %task, "sweep cell failed: {e}");
                    (None, format!("failed: {e}"))
                }
            };
            info!(%axis, %value, %task, micro_f1 = ?f1, runtime, "sweep cell");
            report.rows.push(SweepRow {
                axis: axis.to_string(),
                value: value.clone(),
                task: task.to_string(),
                variant: config.variant.to_string(),
                depth: config.depth,
                m: config.m,
                seed: config.seed,
                micro_f1: f1,
                runtime_secs: runtime,
                status,
            });
        }
    }
    Ok(report)
}
