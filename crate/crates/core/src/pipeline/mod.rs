//! Training over a graph pool, prediction on raw tables, and checkpoints.

mod checkpoint;
mod predict;
mod train;

pub use checkpoint::{decode_model, encode_model, load_model, load_model_for, save_model, CHECKPOINT_VERSION};
pub use predict::{argmax, predict_graph, predict_table, Prediction, PredictionRecord, PredictOptions};
pub use train::{evaluate_pool, train, EpochRecord, TrainingLog};

use crate::colgraph::PoolEntry;
use crate::error::{Error, Result};
use crate::nn::{GnnConfig, Network, Targets, Variant};
use crate::table::{LabelSpace, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Cells sampled per column when embedding.
    pub m: usize,
    /// Message-passing layers S.
    pub depth: usize,
    pub heads: usize,
    pub hidden: usize,
    pub variant: Variant,
    pub seed: u64,
    pub block_size: Option<usize>,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            epochs: 100,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 5e-4,
            m: 25,
            depth: 2,
            heads: 4,
            hidden: 256,
            variant: Variant::Gat,
            seed: 0,
            block_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("m", self.m),
            ("depth", self.depth),
            ("heads", self.heads),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if self.block_size == Some(0) {
            return Err(Error::invalid("block_size must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        if self.variant == Variant::Gat && !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    pub fn gnn_config(&self, input_dim: usize) -> GnnConfig {
        GnnConfig {
            variant: self.variant,
            input_dim,
            hidden: self.hidden,
            depth: self.depth,
            heads: self.heads,
        }
    }
}

/// A trained encoder and head together with what is needed to apply them.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub labels: LabelSpace,
    pub backend_id: String,
    pub config: TrainConfig,
    /// Config hash of the training pool.
    pub pool_hash: [u8; 32],
}

impl TrainedModel {
    pub fn task(&self) -> Task {
        self.config.task
    }

    pub fn input_dim(&self) -> usize {
        self.network.config.gnn.input_dim
    }
}

/// Labeled targets of one pool entry for `task`, or `None` if it has none.
pub fn supervision(entry: &PoolEntry, task: Task) -> Option<(Targets, Vec<usize>)> {
    let (targets, gold) = match task {
        Task::Cta => {
            let labels = entry.cta.as_ref()?;
            let (cols, gold): (Vec<usize>, Vec<usize>) = labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.map(|l| (i, l)))
                .unzip();
            (Targets::Columns(cols), gold)
        }
        Task::Cpa => {
            let pairs = entry.cpa.as_ref()?;
            (
                Targets::Pairs(pairs.iter().map(|p| (p.subject, p.object)).collect()),
                pairs.iter().map(|p| p.label).collect(),
            )
        }
        Task::Tta => (Targets::Table, vec![entry.tta?]),
    };
    (!gold.is_empty()).then_some((targets, gold))
}
