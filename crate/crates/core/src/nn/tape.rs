//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass as a node. Parameter
//! leaves borrow their values from an external slice, so building a tape never
//! copies model weights. [`Tape::backward`] walks the nodes in reverse and
//! returns gradients for every parameter that influenced the output.
//!
//! Only the operations the column-graph networks need are provided; graph
//! operations (`edge_sum`, `segment_softmax`, `aggregate`, ...) iterate the
//! edge list in its stored order, which fixes the summation order per node.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use crate::colgraph::Edge;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<'a> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Elu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    HeadDot { z: Var, a: Var, heads: usize },
    EdgeSum { dst: Var, src: Var, edges: &'a [Edge] },
    SegmentSoftmax { x: Var, edges: &'a [Edge], n: usize },
    Aggregate { alpha: Var, z: Var, edges: &'a [Edge] },
    WeightedAggregate { x: Var, coef: Vec<f64>, edges: &'a [Edge] },
    CrossEntropySum { logits: Var, targets: Vec<usize> },
}

struct Node<'a> {
    op: Op<'a>,
    /// `None` for parameter leaves (value lives in the parameter slice).
    value: Option<Tensor>,
    needs_grad: bool,
}

pub struct Tape<'a> {
    params: &'a [Tensor],
    nodes: Vec<Node<'a>>,
}

/// Gradients with respect to each parameter; `None` if it did not influence the output.
pub struct Gradients {
    pub params: Vec<Option<Tensor>>,
}

fn elementwise(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|x| *x = f(*x));
    out
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log Σ exp(x), stabilized by the row maximum.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [Tensor]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(t)) => t,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op<'a>, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t, false)
    }

    pub fn param(&mut self, index: usize) -> Var {
        assert!(index < self.params.len(), "parameter index out of range");
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(format!("matmul {:?} x {:?}", av.shape(), bv.shape())));
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        matmul_into(av, bv, &mut out);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    /// `x + b` with `b` (1 x m) broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(format!("bias {:?} for {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        let m = out.cols();
        for row in out.data_mut().chunks_mut(m) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += b);
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(Op::AddBias(x, b), out, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(x, y)| *x *= y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), out, ng))
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        let out = elementwise(self.value(x), |v| 1.0 - v);
        let ng = self.needs(x);
        self.push(Op::OneMinus(x), out, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = elementwise(self.value(x), |v| v * s);
        let ng = self.needs(x);
        self.push(Op::Scale(x, s), out, ng)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = elementwise(self.value(x), elu);
        let ng = self.needs(x);
        self.push(Op::Elu(x), out, ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = elementwise(self.value(x), |v| if v > 0.0 { v } else { slope * v });
        let ng = self.needs(x);
        self.push(Op::LeakyRelu(x, slope), out, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = elementwise(self.value(x), sigmoid);
        let ng = self.needs(x);
        self.push(Op::Sigmoid(x), out, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = elementwise(self.value(x), f64::tanh);
        let ng = self.needs(x);
        self.push(Op::Tanh(x), out, ng)
    }

    /// Column means, 1 x m.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.shape();
        let mut out = Tensor::zeros(1, m);
        for r in 0..n {
            out.data_mut().iter_mut().zip(xv.row(r)).for_each(|(o, v)| *o += v);
        }
        out.scale(1.0 / n as f64);
        let ng = self.needs(x);
        self.push(Op::MeanRows(x), out, ng)
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(r) = rows.iter().find(|&&r| r >= xv.rows()) {
            return Err(Error::invalid(format!("row {r} out of range for {} rows", xv.rows())));
        }
        let mut out = Tensor::zeros(rows.len(), xv.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(xv.row(r));
        }
        let ng = self.needs(x);
        Ok(self.push(Op::GatherRows(x, rows), out, ng))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape(format!("concat {:?} with {:?}", av.shape(), bv.shape())));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = Tensor::zeros(av.rows(), ca + cb);
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..ca].copy_from_slice(av.row(r));
            row[ca..].copy_from_slice(bv.row(r));
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::ConcatCols(a, b), out, ng))
    }

    /// Per-head dot products: `z` is n x (heads*f), `a` is heads x f; result n x heads.
    pub fn head_dot(&mut self, z: Var, a: Var, heads: usize) -> Result<Var> {
        let (zv, av) = (self.value(z), self.value(a));
        if av.rows() != heads || zv.cols() != heads * av.cols() {
            return Err(Error::shape(format!("head_dot {:?} with {:?}", zv.shape(), av.shape())));
        }
        let f = av.cols();
        let mut out = Tensor::zeros(zv.rows(), heads);
        for i in 0..zv.rows() {
            let zr = zv.row(i);
            for k in 0..heads {
                let s: f64 = zr[k * f..(k + 1) * f].iter().zip(av.row(k)).map(|(x, y)| x * y).sum();
                out.set(i, k, s);
            }
        }
        let ng = self.needs(z) || self.needs(a);
        Ok(self.push(Op::HeadDot { z, a, heads }, out, ng))
    }

    /// `out[e] = dst_scores[edge.dst] + src_scores[edge.src]`, one row per edge.
    pub fn edge_sum(&mut self, dst: Var, src: Var, edges: &'a [Edge]) -> Result<Var> {
        self.check_same(dst, src, "edge_sum")?;
        let (dv, sv) = (self.value(dst), self.value(src));
        let k = dv.cols();
        let mut out = Tensor::zeros(edges.len(), k);
        for (e, edge) in edges.iter().enumerate() {
            let (d, s) = (dv.row(edge.dst), sv.row(edge.src));
            for (j, o) in out.row_mut(e).iter_mut().enumerate() {
                *o = d[j] + s[j];
            }
        }
        let ng = self.needs(dst) || self.needs(src);
        Ok(self.push(Op::EdgeSum { dst, src, edges }, out, ng))
    }

    /// Softmax of edge scores over each destination's in-edges, per column.
    pub fn segment_softmax(&mut self, x: Var, edges: &'a [Edge], n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != edges.len() {
            return Err(Error::shape("segment_softmax: one row per edge required"));
        }
        let k = xv.cols();
        let mut max = Tensor::filled(n, k, f64::NEG_INFINITY);
        for (e, edge) in edges.iter().enumerate() {
            for (m, &v) in max.row_mut(edge.dst).iter_mut().zip(xv.row(e)) {
                *m = m.max(v);
            }
        }
        let mut out = Tensor::zeros(edges.len(), k);
        let mut sum = Tensor::zeros(n, k);
        for (e, edge) in edges.iter().enumerate() {
            let mrow = max.row(edge.dst);
            let orow = out.row_mut(e);
            for j in 0..k {
                orow[j] = (xv.get(e, j) - mrow[j]).exp();
            }
            sum.row_mut(edge.dst).iter_mut().zip(orow.iter()).for_each(|(s, o)| *s += o);
        }
        for (e, edge) in edges.iter().enumerate() {
            let srow = sum.row(edge.dst).to_vec();
            out.row_mut(e).iter_mut().zip(srow).for_each(|(o, s)| *o /= s);
        }
        let ng = self.needs(x);
        Ok(self.push(Op::SegmentSoftmax { x, edges, n }, out, ng))
    }

    /// Attention-weighted sum: `out[dst, head block k] += alpha[e, k] * z[src, head block k]`.
    pub fn aggregate(&mut self, alpha: Var, z: Var, edges: &'a [Edge], n: usize) -> Result<Var> {
        let (av, zv) = (self.value(alpha), self.value(z));
        let heads = av.cols();
        if av.rows() != edges.len() || heads == 0 || zv.cols() % heads != 0 {
            return Err(Error::shape(format!("aggregate {:?} over {:?}", av.shape(), zv.shape())));
        }
        let f = zv.cols() / heads;
        let mut out = Tensor::zeros(n, zv.cols());
        for (e, edge) in edges.iter().enumerate() {
            let zr = zv.row(edge.src);
            let ar = av.row(e);
            let orow = out.row_mut(edge.dst);
            for k in 0..heads {
                let w = ar[k];
                for (o, &v) in orow[k * f..(k + 1) * f].iter_mut().zip(&zr[k * f..(k + 1) * f]) {
                    *o += w * v;
                }
            }
        }
        let ng = self.needs(alpha) || self.needs(z);
        Ok(self.push(Op::Aggregate { alpha, z, edges }, out, ng))
    }

    /// Fixed-coefficient sum: `out[dst] += coef[e] * x[src]`.
    pub fn weighted_aggregate(&mut self, x: Var, coef: Vec<f64>, edges: &'a [Edge], n: usize) -> Result<Var> {
        if coef.len() != edges.len() {
            return Err(Error::shape("weighted_aggregate: one coefficient per edge required"));
        }
        let xv = self.value(x);
        let mut out = Tensor::zeros(n, xv.cols());
        for (edge, &c) in edges.iter().zip(&coef) {
            let xr = xv.row(edge.src);
            out.row_mut(edge.dst).iter_mut().zip(xr).for_each(|(o, v)| *o += c * v);
        }
        let ng = self.needs(x);
        Ok(self.push(Op::WeightedAggregate { x, coef, edges }, out, ng))
    }

    /// Σ over rows of `-log softmax(logits[r])[targets[r]]`, as a 1 x 1 tensor.
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != targets.len() {
            return Err(Error::shape(format!("{} targets for {} logit rows", targets.len(), lv.rows())));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= lv.cols()) {
            return Err(Error::invalid(format!("target {t} out of range for {} classes", lv.cols())));
        }
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| log_sum_exp(lv.row(r)) - lv.get(r, t))
            .sum();
        let ng = self.needs(logits);
        Ok(self.push(Op::CrossEntropySum { logits, targets }, Tensor::scalar(total), ng))
    }

    /// Back-propagates from the scalar `output`, scaled by `seed`.
    pub fn backward(&self, output: Var, seed: f64) -> Gradients {
        let out_shape = self.value(output).shape();
        assert_eq!(out_shape, (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(seed));
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let acc = |v: Var, delta: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(t) => t.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(i) => match &mut param_grads[*i] {
                    Some(t) => t.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let mut ga = Tensor::zeros(av.rows(), av.cols());
                        matmul_nt_into(&g, bv, &mut ga);
                        acc(*a, ga, &mut grads);
                    }
                    if self.needs(*b) {
                        let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                        matmul_tn_into(av, &g, &mut gb);
                        acc(*b, gb, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        acc(*b, g.clone(), &mut grads);
                    }
                    acc(*a, g, &mut grads);
                }
                Op::AddBias(x, b) => {
                    if self.needs(*b) {
                        let m = g.cols();
                        let mut gb = Tensor::zeros(1, m);
                        for row in g.data().chunks(m) {
                            gb.data_mut().iter_mut().zip(row).for_each(|(o, v)| *o += v);
                        }
                        acc(*b, gb, &mut grads);
                    }
                    acc(*x, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let mut ga = g.clone();
                        ga.data_mut().iter_mut().zip(bv.data()).for_each(|(x, y)| *x *= y);
                        acc(*a, ga, &mut grads);
                    }
                    if self.needs(*b) {
                        let mut gb = g;
                        gb.data_mut().iter_mut().zip(av.data()).for_each(|(x, y)| *x *= y);
                        acc(*b, gb, &mut grads);
                    }
                }
                Op::OneMinus(x) => acc(*x, elementwise(&g, |v| -v), &mut grads),
                Op::Scale(x, s) => acc(*x, elementwise(&g, |v| v * s), &mut grads),
                Op::Elu(x) => {
                    let (xv, yv) = (self.value(*x), node.value.as_ref().unwrap());
                    let mut gx = g;
                    for ((o, &xi), &yi) in gx.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                        if xi <= 0.0 {
                            *o *= yi + 1.0;
                        }
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::LeakyRelu(x, slope) => {
                    let xv = self.value(*x);
                    let mut gx = g;
                    for (o, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                        if xi <= 0.0 {
                            *o *= slope;
                        }
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.as_ref().unwrap();
                    let mut gx = g;
                    gx.data_mut().iter_mut().zip(yv.data()).for_each(|(o, &y)| *o *= y * (1.0 - y));
                    acc(*x, gx, &mut grads);
                }
                Op::Tanh(x) => {
                    let yv = node.value.as_ref().unwrap();
                    let mut gx = g;
                    gx.data_mut().iter_mut().zip(yv.data()).for_each(|(o, &y)| *o *= 1.0 - y * y);
                    acc(*x, gx, &mut grads);
                }
                Op::MeanRows(x) => {
                    let (n, m) = self.value(*x).shape();
                    let mut gx = Tensor::zeros(n, m);
                    let inv = 1.0 / n as f64;
                    for r in 0..n {
                        gx.row_mut(r).iter_mut().zip(g.data()).for_each(|(o, v)| *o = v * inv);
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::GatherRows(x, rows) => {
                    let (n, m) = self.value(*x).shape();
                    let mut gx = Tensor::zeros(n, m);
                    for (i, &r) in rows.iter().enumerate() {
                        gx.row_mut(r).iter_mut().zip(g.row(i)).for_each(|(o, v)| *o += v);
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let rows = g.rows();
                    let mut ga = Tensor::zeros(rows, ca);
                    let mut gb = Tensor::zeros(rows, cb);
                    for r in 0..rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::HeadDot { z, a, heads } => {
                    let (zv, av) = (self.value(*z), self.value(*a));
                    let f = av.cols();
                    let mut gz = Tensor::zeros(zv.rows(), zv.cols());
                    let mut ga = Tensor::zeros(av.rows(), f);
                    for i in 0..zv.rows() {
                        for k in 0..*heads {
                            let gik = g.get(i, k);
                            let zr = &zv.row(i)[k * f..(k + 1) * f];
                            let ar = av.row(k);
                            for j in 0..f {
                                gz.data_mut()[i * zv.cols() + k * f + j] += gik * ar[j];
                            }
                            for (o, &zj) in ga.row_mut(k).iter_mut().zip(zr) {
                                *o += gik * zj;
                            }
                        }
                    }
                    acc(*z, gz, &mut grads);
                    acc(*a, ga, &mut grads);
                }
                Op::EdgeSum { dst, src, edges } => {
                    let (n, k) = self.value(*dst).shape();
                    let mut gd = Tensor::zeros(n, k);
                    let mut gs = Tensor::zeros(n, k);
                    for (e, edge) in edges.iter().enumerate() {
                        gd.row_mut(edge.dst).iter_mut().zip(g.row(e)).for_each(|(o, v)| *o += v);
                        gs.row_mut(edge.src).iter_mut().zip(g.row(e)).for_each(|(o, v)| *o += v);
                    }
                    acc(*dst, gd, &mut grads);
                    acc(*src, gs, &mut grads);
                }
                Op::SegmentSoftmax { x, edges, n } => {
                    let y = node.value.as_ref().unwrap();
                    let k = y.cols();
                    let mut dot = Tensor::zeros(*n, k);
                    for (e, edge) in edges.iter().enumerate() {
                        let drow = dot.row_mut(edge.dst);
                        for j in 0..k {
                            drow[j] += y.get(e, j) * g.get(e, j);
                        }
                    }
                    let mut gx = Tensor::zeros(edges.len(), k);
                    for (e, edge) in edges.iter().enumerate() {
                        for j in 0..k {
                            gx.set(e, j, y.get(e, j) * (g.get(e, j) - dot.get(edge.dst, j)));
                        }
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::Aggregate { alpha, z, edges } => {
                    let (av, zv) = (self.value(*alpha), self.value(*z));
                    let heads = av.cols();
                    let f = zv.cols() / heads;
                    let want_a = self.needs(*alpha);
                    let want_z = self.needs(*z);
                    let mut ga = Tensor::zeros(av.rows(), heads);
                    let mut gz = Tensor::zeros(zv.rows(), zv.cols());
                    for (e, edge) in edges.iter().enumerate() {
                        let grow = g.row(edge.dst);
                        for k in 0..heads {
                            let gb = &grow[k * f..(k + 1) * f];
                            if want_a {
                                let zb = &zv.row(edge.src)[k * f..(k + 1) * f];
                                let s: f64 = gb.iter().zip(zb).map(|(x, y)| x * y).sum();
                                ga.data_mut()[e * heads + k] += s;
                            }
                            if want_z {
                                let w = av.get(e, k);
                                let zrow = gz.row_mut(edge.src);
                                for (o, &v) in zrow[k * f..(k + 1) * f].iter_mut().zip(gb) {
                                    *o += w * v;
                                }
                            }
                        }
                    }
                    acc(*alpha, ga, &mut grads);
                    acc(*z, gz, &mut grads);
                }
                Op::WeightedAggregate { x, coef, edges } => {
                    let (n, m) = self.value(*x).shape();
                    let mut gx = Tensor::zeros(n, m);
                    for (edge, &c) in edges.iter().zip(coef) {
                        let grow = g.row(edge.dst);
                        gx.row_mut(edge.src).iter_mut().zip(grow).for_each(|(o, v)| *o += c * v);
                    }
                    acc(*x, gx, &mut grads);
                }
                Op::CrossEntropySum { logits, targets } => {
                    let lv = self.value(*logits);
                    let scale = g.get(0, 0);
                    let mut gl = Tensor::zeros(lv.rows(), lv.cols());
                    for (r, &t) in targets.iter().enumerate() {
                        let lse = log_sum_exp(lv.row(r));
                        let grow = gl.row_mut(r);
                        for (j, o) in grow.iter_mut().enumerate() {
                            *o = scale * (lv.get(r, j) - lse).exp();
                        }
                        grow[t] -= scale;
                    }
                    acc(*logits, gl, &mut grads);
                }
            }
        }
        Gradients { params: param_grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of d(sum of ce over a tiny two-op graph)/dW.
    #[test]
    fn matmul_cross_entropy_gradient() {
        let w = Tensor::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.5, 0.4, -0.6]).unwrap();
        let x = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let loss = |w: &Tensor| {
            let params = [w.clone()];
            let mut t = Tape::new(&params);
            let xv = t.input(x.clone());
            let wv = t.param(0);
            let y = t.matmul(xv, wv).unwrap();
            let l = t.cross_entropy_sum(y, vec![2, 0]).unwrap();
            t.value(l).get(0, 0)
        };
        let params = [w.clone()];
        let mut t = Tape::new(&params);
        let xv = t.input(x.clone());
        let wv = t.param(0);
        let y = t.matmul(xv, wv).unwrap();
        let l = t.cross_entropy_sum(y, vec![2, 0]).unwrap();
        let g = t.backward(l, 1.0).params.remove(0).unwrap();
        for i in 0..w.len() {
            let mut plus = w.clone();
            plus.data_mut()[i] += 1e-6;
            let mut minus = w.clone();
            minus.data_mut()[i] -= 1e-6;
            let fd = (loss(&plus) - loss(&minus)) / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-8, "entry {i}: {fd} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn segment_softmax_normalizes_per_destination() {
        let edges = [
            Edge { src: 0, dst: 0 },
            Edge { src: 1, dst: 0 },
            Edge { src: 1, dst: 1 },
        ];
        let mut t = Tape::new(&[]);
        let x = t.input(Tensor::from_vec(3, 2, vec![1.0, 5.0, 2.0, -3.0, 7.0, 0.0]).unwrap());
        let y = t.segment_softmax(x, &edges, 2).unwrap();
        let v = t.value(y);
        for k in 0..2 {
            assert!((v.get(0, k) + v.get(1, k) - 1.0).abs() < 1e-15);
            assert_eq!(v.get(2, k), 1.0);
        }
    }

    #[test]
    fn unused_parameters_get_no_gradient() {
        let params = [Tensor::scalar(2.0), Tensor::scalar(3.0)];
        let mut t = Tape::new(&params);
        let a = t.param(0);
        let _b = t.param(1);
        let y = t.mul(a, a).unwrap();
        let g = t.backward(y, 1.0);
        assert_eq!(g.params[0].as_ref().unwrap().get(0, 0), 4.0);
        assert!(g.params[1].is_none());
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut t = Tape::new(&[]);
        let a = t.input(Tensor::zeros(2, 3));
        let b = t.input(Tensor::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        assert!(t.cross_entropy_sum(a, vec![0, 3]).is_err());
        assert!(t.gather_rows(a, vec![2]).is_err());
    }
}
