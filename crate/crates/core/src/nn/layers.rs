//! Message-passing layers over a column graph, expressed as tape operations.

use rand::Rng;

use super::params::{xavier_uniform, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::colgraph::ColumnGraph;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Multi-head graph attention with concatenated heads.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub heads: usize,
    pub w: usize,
    pub attn_dst: usize,
    pub attn_src: usize,
    pub bias: usize,
}

#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w: usize,
    pub bias: usize,
}

/// Gated update: mean of transformed neighbor states fed through a GRU cell.
#[derive(Debug, Clone)]
pub struct GgnnLayer {
    pub w_msg: usize,
    pub w_z: usize,
    pub u_z: usize,
    pub b_z: usize,
    pub w_r: usize,
    pub u_r: usize,
    pub b_r: usize,
    pub w_h: usize,
    pub u_h: usize,
    pub b_h: usize,
}

fn square(store: &mut ParamStore, name: String, h: usize, rng: &mut impl Rng) -> usize {
    store.add(name, xavier_uniform(h, h, h, h, rng))
}

fn bias(store: &mut ParamStore, name: String, h: usize) -> usize {
    store.add(name, Tensor::zeros(1, h))
}

impl GatLayer {
    pub fn new(prefix: &str, hidden: usize, heads: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || !hidden.is_multiple_of(heads) {
            return Err(Error::invalid(format!("hidden width {hidden} is not divisible by {heads} heads")));
        }
        let f = hidden / heads;
        let w = square(store, format!("{prefix}.w"), hidden, rng);
        let attn_dst = store.add(format!("{prefix}.attn_dst"), xavier_uniform(heads, f, f, 1, rng));
        let attn_src = store.add(format!("{prefix}.attn_src"), xavier_uniform(heads, f, f, 1, rng));
        let bias = bias(store, format!("{prefix}.bias"), hidden);
        Ok(Self {
            heads,
            w,
            attn_dst,
            attn_src,
            bias,
        })
    }

    /// Returns the layer output (before any residual) and the attention
    /// coefficients, one row per edge and one column per head.
    pub fn forward<'a>(&self, tape: &mut Tape<'a>, graph: &'a ColumnGraph, h: Var, last: bool) -> Result<(Var, Var)> {
        let n = graph.n_nodes();
        let w = tape.param(self.w);
        let z = tape.matmul(h, w)?;
        let a_dst = tape.param(self.attn_dst);
        let a_src = tape.param(self.attn_src);
        let s_dst = tape.head_dot(z, a_dst, self.heads)?;
        let s_src = tape.head_dot(z, a_src, self.heads)?;
        let e = tape.edge_sum(s_dst, s_src, &graph.edges)?;
        let e = tape.leaky_relu(e, LEAKY_SLOPE);
        let alpha = tape.segment_softmax(e, &graph.edges, n)?;
        let agg = tape.aggregate(alpha, z, &graph.edges, n)?;
        let b = tape.param(self.bias);
        let out = tape.add_bias(agg, b)?;
        Ok((if last { out } else { tape.elu(out) }, alpha))
    }
}

/// `1 / sqrt(deg(src) * deg(dst))` per edge, degrees counted over in-edges.
pub fn gcn_coefficients(graph: &ColumnGraph) -> Vec<f64> {
    let deg = graph.in_degrees();
    graph
        .edges
        .iter()
        .map(|e| 1.0 / ((deg[e.src] * deg[e.dst]) as f64).sqrt())
        .collect()
}

/// `1 / deg(dst)` per edge: averages over each node's in-neighbors.
pub fn mean_coefficients(graph: &ColumnGraph) -> Vec<f64> {
    let deg = graph.in_degrees();
    graph.edges.iter().map(|e| 1.0 / deg[e.dst] as f64).collect()
}

impl GcnLayer {
    pub fn new(prefix: &str, hidden: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let w = square(store, format!("{prefix}.w"), hidden, rng);
        let bias = bias(store, format!("{prefix}.bias"), hidden);
        Self { w, bias }
    }

    pub fn forward<'a>(&self, tape: &mut Tape<'a>, graph: &'a ColumnGraph, h: Var, last: bool) -> Result<Var> {
        let w = tape.param(self.w);
        let hw = tape.matmul(h, w)?;
        let agg = tape.weighted_aggregate(hw, gcn_coefficients(graph), &graph.edges, graph.n_nodes())?;
        let b = tape.param(self.bias);
        let out = tape.add_bias(agg, b)?;
        Ok(if last { out } else { tape.elu(out) })
    }
}

impl GgnnLayer {
    pub fn new(prefix: &str, hidden: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let mut sq = |name: &str, store: &mut ParamStore| square(store, format!("{prefix}.{name}"), hidden, rng);
        let w_msg = sq("w_msg", store);
        let w_z = sq("w_z", store);
        let u_z = sq("u_z", store);
        let w_r = sq("w_r", store);
        let u_r = sq("u_r", store);
        let w_h = sq("w_h", store);
        let u_h = sq("u_h", store);
        let b_z = bias(store, format!("{prefix}.b_z"), hidden);
        let b_r = bias(store, format!("{prefix}.b_r"), hidden);
        let b_h = bias(store, format!("{prefix}.b_h"), hidden);
        Self {
            w_msg,
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        }
    }

    fn gate<'a>(tape: &mut Tape<'a>, m: Var, h: Var, w: usize, u: usize, b: usize) -> Result<Var> {
        let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
        let mw = tape.matmul(m, w)?;
        let hu = tape.matmul(h, u)?;
        let s = tape.add(mw, hu)?;
        tape.add_bias(s, b)
    }

    /// `h' = (1 - z) * h + z * tanh(W_h m + U_h (r * h) + b_h)`.
    pub fn forward<'a>(&self, tape: &mut Tape<'a>, graph: &'a ColumnGraph, h: Var) -> Result<Var> {
        let w_msg = tape.param(self.w_msg);
        let hw = tape.matmul(h, w_msg)?;
        let m = tape.weighted_aggregate(hw, mean_coefficients(graph), &graph.edges, graph.n_nodes())?;
        let z = Self::gate(tape, m, h, self.w_z, self.u_z, self.b_z)?;
        let z = tape.sigmoid(z);
        let r = Self::gate(tape, m, h, self.w_r, self.u_r, self.b_r)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = Self::gate(tape, m, rh, self.w_h, self.u_h, self.b_h)?;
        let cand = tape.tanh(cand);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }
}
