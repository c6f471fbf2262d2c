//! Shared fixtures and dense masked-matrix references for the layer tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabemb::colgraph::{ColumnGraph, Edge};
use tabemb::nn::{GnnConfig, Network, NetworkConfig, Tensor, Variant, LEAKY_SLOPE};
use tabemb::table::Task;

pub fn random_tensor(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random symmetric graph with self-loops, edges grouped by destination.
pub fn random_graph(n: usize, d: usize, density: f64, rng: &mut impl Rng) -> ColumnGraph {
    let mut adj = vec![vec![false; n]; n];
    for u in 0..n {
        adj[u][u] = true;
        for v in 0..u {
            if rng.random_bool(density) {
                adj[u][v] = true;
                adj[v][u] = true;
            }
        }
    }
    let mut edges = Vec::new();
    for dst in 0..n {
        for src in 0..n {
            if adj[dst][src] {
                edges.push(Edge { src, dst });
            }
        }
    }
    ColumnGraph::new("g", random_tensor(n, d, rng), edges).unwrap()
}

pub fn adjacency(g: &ColumnGraph) -> Vec<Vec<bool>> {
    let n = g.n_nodes();
    let mut a = vec![vec![false; n]; n];
    for e in &g.edges {
        a[e.dst][e.src] = true;
    }
    a
}

pub fn mat(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
    (0..rows).map(|r| (0..cols).map(|c| f(r, c)).collect()).collect()
}

pub fn mm(a: &[Vec<f64>], b: &Tensor) -> Vec<Vec<f64>> {
    mat(a.len(), b.cols(), |r, c| (0..b.rows()).map(|k| a[r][k] * b.get(k, c)).sum())
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn network(variant: Variant, d: usize, h: usize, depth: usize, heads: usize, task: Task, seed: u64) -> Network {
    let gnn = GnnConfig {
        variant,
        input_dim: d,
        hidden: h,
        depth,
        heads,
    };
    Network::new(
        NetworkConfig {
            gnn,
            task,
            n_labels: 3,
        },
        seed,
    )
    .unwrap()
}

/// Randomizes every parameter (biases included) so oracles see nonzero values.
pub fn randomize(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in net.params.values_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
    }
}

pub fn p<'a>(net: &'a Network, name: &str) -> &'a Tensor {
    net.params.get(name).unwrap_or_else(|| panic!("no parameter {name}"))
}

/// Dense reference for one GAT layer (pre-residual).
pub fn dense_gat(net: &Network, s: usize, heads: usize, adj: &[Vec<bool>], h: &[Vec<f64>], last: bool) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = h.len();
    let z = mm(h, p(net, &format!("gat{s}.w")));
    let (ad, asrc, b) = (p(net, &format!("gat{s}.attn_dst")), p(net, &format!("gat{s}.attn_src")), p(net, &format!("gat{s}.bias")));
    let width = z[0].len();
    let f = width / heads;
    let mut out = vec![vec![0.0; width]; n];
    let mut alphas = Vec::new();
    for k in 0..heads {
        let dot = |a: &Tensor, u: usize| (0..f).map(|j| a.get(k, j) * z[u][k * f + j]).sum::<f64>();
        let mut alpha = vec![vec![0.0; n]; n];
        for u in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|v| {
                    let e = dot(ad, u) + dot(asrc, v);
                    if adj[u][v] {
                        if e > 0.0 { e } else { LEAKY_SLOPE * e }
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            for v in 0..n {
                alpha[u][v] = (scores[v] - mx).exp() / total;
            }
            for j in 0..f {
                out[u][k * f + j] = (0..n).map(|v| alpha[u][v] * z[v][k * f + j]).sum();
            }
        }
        alphas.push(alpha);
    }
    for row in &mut out {
        for (c, x) in row.iter_mut().enumerate() {
            *x += b.get(0, c);
            if !last {
                *x = elu(*x);
            }
        }
    }
    (out, alphas)
}

pub fn dense_gcn(net: &Network, s: usize, adj: &[Vec<bool>], h: &[Vec<f64>], last: bool) -> Vec<Vec<f64>> {
    let n = h.len();
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().filter(|&&x| x).count() as f64).collect();
    let norm = mat(n, n, |u, v| if adj[u][v] { 1.0 / (deg[u] * deg[v]).sqrt() } else { 0.0 });
    let hw = mm(h, p(net, &format!("gcn{s}.w")));
    let b = p(net, &format!("gcn{s}.bias"));
    mat(n, hw[0].len(), |u, c| {
        let x = (0..n).map(|v| norm[u][v] * hw[v][c]).sum::<f64>() + b.get(0, c);
        if last { x } else { elu(x) }
    })
}

pub fn dense_ggnn(net: &Network, s: usize, adj: &[Vec<bool>], h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = h.len();
    let w = h[0].len();
    let q = |name: &str| p(net, &format!("ggnn{s}.{name}"));
    let hw = mm(h, q("w_msg"));
    let m = mat(n, w, |u, c| {
        let nb: Vec<usize> = (0..n).filter(|&v| adj[u][v]).collect();
        nb.iter().map(|&v| hw[v][c]).sum::<f64>() / nb.len() as f64
    });
    let lin = |x: &[Vec<f64>], wm: &str, y: &[Vec<f64>], um: &str, b: &str| {
        let (a, bb) = (mm(x, q(wm)), mm(y, q(um)));
        mat(n, w, |u, c| a[u][c] + bb[u][c] + q(b).get(0, c))
    };
    let z = lin(&m, "w_z", h, "u_z", "b_z");
    let r = lin(&m, "w_r", h, "u_r", "b_r");
    let rh = mat(n, w, |u, c| sig(r[u][c]) * h[u][c]);
    let cand = lin(&m, "w_h", &rh, "u_h", "b_h");
    mat(n, w, |u, c| {
        let zz = sig(z[u][c]);
        (1.0 - zz) * h[u][c] + zz * cand[u][c].tanh()
    })
}

/// Full encoder reference: projection, then layers with residuals.
pub fn dense_encoder(net: &Network, g: &ColumnGraph) -> Vec<Vec<f64>> {
    let adj = adjacency(g);
    let x = g.features.to_rows();
    let cfg = net.config.gnn;
    let b = p(net, "proj.bias");
    let mut h: Vec<Vec<f64>> = mm(&x, p(net, "proj.w"))
        .into_iter()
        .map(|r| r.iter().enumerate().map(|(c, v)| v + b.get(0, c)).collect())
        .collect();
    let depth = net.gnn.layers.len();
    for s in 0..depth {
        let last = s + 1 == depth;
        h = match cfg.variant {
            Variant::Gat => {
                let out = dense_gat(net, s, cfg.heads, &adj, &h, last).0;
                mat(h.len(), h[0].len(), |u, c| out[u][c] + h[u][c])
            }
            Variant::Gcn => {
                let out = dense_gcn(net, s, &adj, &h, last);
                mat(h.len(), h[0].len(), |u, c| out[u][c] + h[u][c])
            }
            Variant::Ggnn => dense_ggnn(net, s, &adj, &h),
            Variant::None => unreachable!(),
        };
    }
    h
}

pub fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn psi(net: &Network, g: &ColumnGraph) -> Vec<Vec<f64>> {
    net.struct_embedding(g).unwrap().into_iter().map(|e| e.values).collect()
}

