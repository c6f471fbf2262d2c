use serde::{Deserialize, Serialize};
use tracing::warn;

use super::TrainedModel;
use crate::colgraph::{construct_graph, ColumnGraph};
use crate::embed::{column_embeddings, EmbeddingBackend, EmbeddingCache};
use crate::error::{Error, Result};
use crate::nn::{Targets, Tensor};
use crate::table::{LabelSpace, Table, Task};

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// One label ordinal per column.
    Columns(Vec<usize>),
    /// One label ordinal per requested ordered pair.
    Pairs(Vec<((usize, usize), usize)>),
    Table(usize),
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    /// CPA pairs to score; defaults to every ordered pair of distinct columns.
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Proceed with a warning when the backend differs from the one used in training.
    pub allow_backend_mismatch: bool,
}

/// One output line, shaped like the label fields of a dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub table_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cta: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpa: Option<Vec<(usize, usize, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tta: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<Vec<f64>>>,
}

impl PredictionRecord {
    pub fn new(table_id: &str, prediction: &Prediction, labels: &LabelSpace, logits: Option<&Tensor>) -> Self {
        let name = |o: usize| labels.label(o).unwrap_or("?").to_string();
        let mut rec = Self {
            table_id: table_id.to_string(),
            cta: None,
            cpa: None,
            tta: None,
            logits: logits.map(Tensor::to_rows),
        };
        match prediction {
            Prediction::Columns(c) => rec.cta = Some(c.iter().map(|&o| name(o)).collect()),
            Prediction::Pairs(p) => rec.cpa = Some(p.iter().map(|&((i, j), o)| (i, j, name(o))).collect()),
            Prediction::Table(o) => rec.tta = Some(name(*o)),
        }
        rec
    }
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect()
}

/// Prediction and raw logits (one row per target) for an already built graph.
pub fn predict_graph(model: &TrainedModel, graph: &ColumnGraph, pairs: Option<&[(usize, usize)]>) -> Result<(Prediction, Tensor)> {
    let n = graph.n_nodes();
    let targets = match model.task() {
        Task::Cta => Targets::Columns((0..n).collect()),
        Task::Cpa => Targets::Pairs(pairs.map_or_else(|| all_pairs(n), <[_]>::to_vec)),
        Task::Tta => Targets::Table,
    };
    if targets.is_empty() {
        return Ok((Prediction::Pairs(Vec::new()), Tensor::zeros(0, model.labels.len())));
    }
    let logits = model.network.forward(graph, &targets)?.logits;
    let labels: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let prediction = match targets {
        Targets::Columns(_) => Prediction::Columns(labels),
        Targets::Pairs(p) => Prediction::Pairs(p.into_iter().zip(labels).collect()),
        Targets::Table => Prediction::Table(labels[0]),
    };
    Ok((prediction, logits))
}

/// Embeds `table` with the model's sampling settings, builds its graph and predicts.
pub fn predict_table(
    table: &Table,
    model: &TrainedModel,
    backend: &dyn EmbeddingBackend,
    cache: Option<&EmbeddingCache>,
    options: &PredictOptions,
) -> Result<(Prediction, Tensor)> {
    if backend.backend_id() != model.backend_id {
        let message = format!(
            "model was trained on backend {} but {} was given",
            model.backend_id,
            backend.backend_id()
        );
        if !options.allow_backend_mismatch || backend.dim() != model.input_dim() {
            return Err(Error::validation(message));
        }
        warn!("{message}");
    }
    let psi0 = column_embeddings(table, backend, model.config.m, model.config.seed, cache)?;
    let graph = construct_graph(table.id(), &psi0, model.config.block_size)?;
    predict_graph(model, &graph, options.pairs.as_deref())
}
