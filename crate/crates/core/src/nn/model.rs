use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{GatLayer, GcnLayer, GgnnLayer};
use super::params::{xavier_uniform, ParamStore};
use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::colgraph::ColumnGraph;
use crate::embed::ColumnEmbedding;
use crate::error::{Error, Result};
use crate::table::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No message passing: ψ is the input projection of ψ⁽⁰⁾.
    None,
    Gat,
    Gcn,
    Ggnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::None, Variant::Gat, Variant::Gcn, Variant::Ggnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Gat => "gat",
            Variant::Gcn => "gcn",
            Variant::Ggnn => "ggnn",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::None => 0,
            Variant::Gat => 1,
            Variant::Gcn => 2,
            Variant::Ggnn => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.code() == code)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown GNN variant {s:?} (expected none, gat, gcn or ggnn)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnConfig {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden: usize,
    /// Number of message-passing layers S; ignored for [`Variant::None`].
    pub depth: usize,
    /// Attention heads K; only used by GAT.
    pub heads: usize,
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("input and hidden widths must be positive"));
        }
        if self.variant != Variant::None && self.depth == 0 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        if self.variant == Variant::Gat && (self.heads == 0 || !self.hidden.is_multiple_of(self.heads)) {
            return Err(Error::invalid(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Gat(GatLayer),
    Gcn(GcnLayer),
    Ggnn(GgnnLayer),
}

/// Input projection plus S message-passing layers.
#[derive(Debug, Clone)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub proj_w: usize,
    pub proj_b: usize,
    pub layers: Vec<Layer>,
}

/// Tape handles produced by [`GnnModel::forward`].
pub struct GnnOutput {
    pub psi: Var,
    /// GAT attention coefficients per layer (edges x heads); empty for other variants.
    pub attention: Vec<Var>,
}

impl GnnModel {
    pub fn new(config: GnnConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.input_dim, config.hidden);
        let proj_w = store.add("proj.w", xavier_uniform(d, h, d, h, rng));
        let proj_b = store.add("proj.bias", Tensor::zeros(1, h));
        let depth = if config.variant == Variant::None { 0 } else { config.depth };
        let mut layers = Vec::with_capacity(depth);
        for s in 0..depth {
            let prefix = format!("{}{s}", config.variant);
            layers.push(match config.variant {
                Variant::Gat => Layer::Gat(GatLayer::new(&prefix, h, config.heads, store, rng)?),
                Variant::Gcn => Layer::Gcn(GcnLayer::new(&prefix, h, store, rng)),
                Variant::Ggnn => Layer::Ggnn(GgnnLayer::new(&prefix, h, store, rng)),
                Variant::None => unreachable!(),
            });
        }
        Ok(Self {
            config,
            proj_w,
            proj_b,
            layers,
        })
    }

    /// H⁰ = XW + b, then for GAT and GCN `H^s = Layer(H^{s-1}) + H^{s-1}`;
    /// the GGNN cell already interpolates with its input and is applied as is.
    pub fn forward<'a>(&self, tape: &mut Tape<'a>, graph: &'a ColumnGraph) -> Result<GnnOutput> {
        if graph.dim() != self.config.input_dim {
            return Err(Error::shape(format!(
                "graph features have dimension {}, model expects {}",
                graph.dim(),
                self.config.input_dim
            )));
        }
        let x = tape.input(graph.features.clone());
        let w = tape.param(self.proj_w);
        let b = tape.param(self.proj_b);
        let xw = tape.matmul(x, w)?;
        let mut h = tape.add_bias(xw, b)?;
        let mut attention = Vec::new();
        let depth = self.layers.len();
        for (s, layer) in self.layers.iter().enumerate() {
            let last = s + 1 == depth;
            h = match layer {
                Layer::Gat(l) => {
                    let (out, alpha) = l.forward(tape, graph, h, last)?;
                    attention.push(alpha);
                    tape.add(out, h)?
                }
                Layer::Gcn(l) => {
                    let out = l.forward(tape, graph, h, last)?;
                    tape.add(out, h)?
                }
                Layer::Ggnn(l) => l.forward(tape, graph, h)?,
            };
        }
        Ok(GnnOutput { psi: h, attention })
    }
}

/// What a head is asked to classify for one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    Columns(Vec<usize>),
    Pairs(Vec<(usize, usize)>),
    Table,
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Columns(c) => c.len(),
            Targets::Pairs(p) => p.len(),
            Targets::Table => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Columns(_) => Task::Cta,
            Targets::Pairs(_) => Task::Cpa,
            Targets::Table => Task::Tta,
        }
    }
}

/// Linear classifier over ψ rows, concatenated pairs or the mean of rows.
#[derive(Debug, Clone)]
pub struct TaskHead {
    pub task: Task,
    pub n_labels: usize,
    pub w: usize,
    pub b: usize,
}

impl TaskHead {
    pub fn new(task: Task, hidden: usize, n_labels: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        if n_labels == 0 {
            return Err(Error::invalid("label space is empty"));
        }
        let width = if task == Task::Cpa { 2 * hidden } else { hidden };
        let prefix = format!("head.{}", task.as_str());
        let w = store.add(format!("{prefix}.w"), xavier_uniform(width, n_labels, width, n_labels, rng));
        let b = store.add(format!("{prefix}.bias"), Tensor::zeros(1, n_labels));
        Ok(Self { task, n_labels, w, b })
    }

    pub fn forward<'a>(&self, tape: &mut Tape<'a>, psi: Var, targets: &Targets) -> Result<Var> {
        if targets.task() != self.task {
            return Err(Error::invalid(format!(
                "{} head cannot score {} targets",
                self.task,
                targets.task()
            )));
        }
        let n = tape.value(psi).rows();
        let features = match targets {
            Targets::Columns(cols) => tape.gather_rows(psi, cols.clone())?,
            Targets::Pairs(pairs) => {
                if let Some((i, _)) = pairs.iter().find(|(i, j)| i == j) {
                    return Err(Error::invalid(format!("column pair ({i}, {i}) has identical columns")));
                }
                if let Some(&(i, j)) = pairs.iter().find(|(i, j)| *i >= n || *j >= n) {
                    return Err(Error::invalid(format!("column pair ({i}, {j}) out of range for {n} columns")));
                }
                let s = tape.gather_rows(psi, pairs.iter().map(|p| p.0).collect())?;
                let o = tape.gather_rows(psi, pairs.iter().map(|p| p.1).collect())?;
                tape.concat_cols(s, o)?
            }
            Targets::Table => tape.mean_rows(psi),
        };
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let z = tape.matmul(features, w)?;
        tape.add_bias(z, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub gnn: GnnConfig,
    pub task: Task,
    pub n_labels: usize,
}

/// GNN encoder plus one task head, sharing a single parameter store.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub gnn: GnnModel,
    pub head: TaskHead,
    pub params: ParamStore,
}

/// Result of one forward pass outside training.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub psi: Tensor,
    pub logits: Tensor,
    pub attention: Vec<Tensor>,
}

impl Network {
    /// Parameters are drawn from a ChaCha8 stream seeded with `seed`, in a
    /// fixed order, so equal seeds give bit-identical networks.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let gnn = GnnModel::new(config.gnn, &mut params, &mut rng)?;
        let head = TaskHead::new(config.task, config.gnn.hidden, config.n_labels, &mut params, &mut rng)?;
        Ok(Self {
            config,
            gnn,
            head,
            params,
        })
    }

    /// Refined column embeddings ψ, one per node.
    pub fn struct_embedding(&self, graph: &ColumnGraph) -> Result<Vec<ColumnEmbedding>> {
        let mut tape = Tape::new(self.params.values());
        let out = self.gnn.forward(&mut tape, graph)?;
        Ok(tape
            .value(out.psi)
            .to_rows()
            .into_iter()
            .map(ColumnEmbedding::refined)
            .collect())
    }

    /// GAT attention per layer (edges x heads); empty for other variants.
    pub fn attention(&self, graph: &ColumnGraph) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new(self.params.values());
        let out = self.gnn.forward(&mut tape, graph)?;
        Ok(out.attention.iter().map(|a| tape.value(*a).clone()).collect())
    }

    pub fn forward(&self, graph: &ColumnGraph, targets: &Targets) -> Result<ForwardPass> {
        let mut tape = Tape::new(self.params.values());
        let out = self.gnn.forward(&mut tape, graph)?;
        let logits = self.head.forward(&mut tape, out.psi, targets)?;
        Ok(ForwardPass {
            psi: tape.value(out.psi).clone(),
            logits: tape.value(logits).clone(),
            attention: out.attention.iter().map(|a| tape.value(*a).clone()).collect(),
        })
    }

    /// Summed cross-entropy over the targets and gradients of `scale * loss`.
    pub fn loss_and_gradients(
        &self,
        graph: &ColumnGraph,
        targets: &Targets,
        gold: &[usize],
        scale: f64,
    ) -> Result<(f64, Gradients)> {
        if gold.len() != targets.len() {
            return Err(Error::shape(format!("{} gold labels for {} targets", gold.len(), targets.len())));
        }
        let mut tape = Tape::new(self.params.values());
        let out = self.gnn.forward(&mut tape, graph)?;
        let logits = self.head.forward(&mut tape, out.psi, targets)?;
        let loss = tape.cross_entropy_sum(logits, gold.to_vec())?;
        let value = tape.value(loss).get(0, 0);
        Ok((value, tape.backward(loss, scale)))
    }

    pub fn loss(&self, graph: &ColumnGraph, targets: &Targets, gold: &[usize]) -> Result<f64> {
        let mut tape = Tape::new(self.params.values());
        let out = self.gnn.forward(&mut tape, graph)?;
        let logits = self.head.forward(&mut tape, out.psi, targets)?;
        let loss = tape.cross_entropy_sum(logits, gold.to_vec())?;
        Ok(tape.value(loss).get(0, 0))
    }
}
