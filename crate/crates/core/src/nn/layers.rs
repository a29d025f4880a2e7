//! Fully connected, graph attention and self-attention layers.

use std::f64::consts::PI;
use std::rc::Rc;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.2;
/// Half-width of the uniform init for attention logit vectors.
const ATTENTION_INIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
    /// `π·tanh(x)`, range `(−π, π)`.
    TanhPi,
    /// `1 + softplus(x)`, range `(1, ∞)`.
    SoftplusPlusOne,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::TanhPi => {
                let t = g.tanh(x);
                g.scale(t, PI)
            }
            Activation::SoftplusPlusOne => {
                let s = g.softplus(x);
                g.add_scalar(s, 1.0)
            }
        }
    }
}

fn check_cols(g: &Graph, x: Var, expected: usize, what: &str) -> Result<()> {
    let (_, cols) = g.shape(x);
    if cols != expected {
        return Err(Error::Contract(format!("{what} expects {expected} input features, got {cols}")));
    }
    Ok(())
}

/// `activation(x·W + b)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        Self::with_scale(store, name, in_dim, out_dim, activation, 1.0, rng)
    }

    /// Like [`Linear::new`] with the init bound multiplied by `scale`.
    pub fn with_scale(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        scale: f64,
        rng: &mut Rng,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "{name}: zero-sized layer");
        let bound = scale / (in_dim as f64).sqrt();
        let w = store.add(format!("{name}.w"), Tensor::uniform(in_dim, out_dim, bound, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, out_dim));
        Self { w, b, in_dim, out_dim, activation }
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols(g, x, self.in_dim, "linear layer")?;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w);
        let y = g.add_bias(xw, b);
        Ok(self.activation.apply(g, y))
    }
}

/// Learned row-wise normalization.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(1, dim, 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(1, dim));
        Self { gamma, beta, dim }
    }

    pub fn param_count(dim: usize) -> usize {
        2 * dim
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols(g, x, self.dim, "layer norm")?;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok(g.layer_norm(x, gamma, beta))
    }
}

/// Directed edges with per-edge features, self-loops included.
///
/// Several disjoint graphs can be stacked into one with [`EdgeList::concat`]
/// so a whole minibatch goes through a layer at once.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub n_nodes: usize,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub features: Tensor,
}

impl EdgeList {
    /// Builds from explicit edges, appending one self-loop per node with zero features.
    pub fn with_self_loops(n_nodes: usize, edges: &[(usize, usize)], features: &[Vec<f64>], n_features: usize) -> Result<Self> {
        if edges.len() != features.len() {
            return Err(Error::Contract(format!("{} edges but {} feature rows", edges.len(), features.len())));
        }
        let mut src = Vec::with_capacity(edges.len() + n_nodes);
        let mut dst = Vec::with_capacity(edges.len() + n_nodes);
        let mut data = Vec::with_capacity((edges.len() + n_nodes) * n_features);
        for (&(s, d), f) in edges.iter().zip(features) {
            if s >= n_nodes || d >= n_nodes {
                return Err(Error::Contract(format!("edge ({s}, {d}) outside {n_nodes} nodes")));
            }
            if f.len() != n_features {
                return Err(Error::Contract(format!("edge feature width {} != {n_features}", f.len())));
            }
            src.push(s);
            dst.push(d);
            data.extend_from_slice(f);
        }
        for i in 0..n_nodes {
            src.push(i);
            dst.push(i);
            data.extend(std::iter::repeat_n(0.0, n_features));
        }
        let rows = src.len();
        Ok(Self { n_nodes, src: src.into(), dst: dst.into(), features: Tensor::from_vec(rows, n_features, data) })
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// Disjoint union; node ids of later graphs are offset.
    pub fn concat(parts: &[EdgeList]) -> Self {
        let n_features = parts.first().map_or(0, |p| p.features.cols());
        let (mut src, mut dst, mut data) = (Vec::new(), Vec::new(), Vec::new());
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.features.cols(), n_features);
            src.extend(p.src.iter().map(|s| s + offset));
            dst.extend(p.dst.iter().map(|d| d + offset));
            data.extend_from_slice(p.features.data());
            offset += p.n_nodes;
        }
        let rows = src.len();
        Self { n_nodes: offset, src: src.into(), dst: dst.into(), features: Tensor::from_vec(rows, n_features, data) }
    }
}

/// Multi-head graph attention with edge features in the attention logits.
///
/// For head `h`, edge `j → i`:
/// `e = leaky(a_srcᵀ W_src x_j + a_dstᵀ W_dst x_i + a_edgeᵀ W_edge f_ji)`,
/// `α = softmax_j(e)`, `out_i = Σ_j α (W_src x_j + W_edge f_ji)`, heads
/// concatenated, then bias. Self-loops carry zero edge features, so a node
/// without in-edges reduces to `W_src x_i + b`.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub w_src: ParamId,
    pub w_dst: ParamId,
    pub w_edge: ParamId,
    pub att_src: ParamId,
    pub att_dst: ParamId,
    pub att_edge: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub edge_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub activation: Activation,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        edge_dim: usize,
        heads: usize,
        head_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        assert!(in_dim > 0 && edge_dim > 0 && heads > 0 && head_dim > 0, "{name}: zero-sized layer");
        let out = heads * head_dim;
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w_src = store.add(format!("{name}.w_src"), Tensor::uniform(in_dim, out, bound, rng));
        let w_dst = store.add(format!("{name}.w_dst"), Tensor::uniform(in_dim, out, bound, rng));
        let w_edge = store.add(format!("{name}.w_edge"), Tensor::uniform(edge_dim, out, 1.0 / (edge_dim as f64).sqrt(), rng));
        let att_src = store.add(format!("{name}.att_src"), Tensor::uniform(1, out, ATTENTION_INIT, rng));
        let att_dst = store.add(format!("{name}.att_dst"), Tensor::uniform(1, out, ATTENTION_INIT, rng));
        let att_edge = store.add(format!("{name}.att_edge"), Tensor::uniform(1, out, ATTENTION_INIT, rng));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out));
        Self { w_src, w_dst, w_edge, att_src, att_dst, att_edge, bias, in_dim, edge_dim, heads, head_dim, activation }
    }

    pub fn param_count(in_dim: usize, edge_dim: usize, heads: usize, head_dim: usize) -> usize {
        let out = heads * head_dim;
        2 * in_dim * out + edge_dim * out + 4 * out
    }

    pub fn out_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, edges: &EdgeList) -> Result<Var> {
        check_cols(g, x, self.in_dim, "graph attention layer")?;
        let (n, _) = g.shape(x);
        if n != edges.n_nodes {
            return Err(Error::Contract(format!("{n} node rows but edge list has {} nodes", edges.n_nodes)));
        }
        if edges.features.cols() != self.edge_dim {
            return Err(Error::Contract(format!(
                "edge features have width {}, layer expects {}",
                edges.features.cols(),
                self.edge_dim
            )));
        }
        if edges.src.iter().chain(edges.dst.iter()).any(|&i| i >= n) {
            return Err(Error::Contract("dangling edge index".into()));
        }
        let w_src = g.param(store, self.w_src);
        let w_dst = g.param(store, self.w_dst);
        let att_src = g.param(store, self.att_src);
        let att_dst = g.param(store, self.att_dst);
        let hs = g.matmul(x, w_src);
        let hd = g.matmul(x, w_dst);
        let a_s = g.head_dot(hs, att_src, self.heads);
        let a_d = g.head_dot(hd, att_dst, self.heads);
        let ls = g.gather_rows(a_s, edges.src.clone());
        let ld = g.gather_rows(a_d, edges.dst.clone());
        let w_edge = g.param(store, self.w_edge);
        let att_edge = g.param(store, self.att_edge);
        let ef = g.input(edges.features.clone());
        let he = g.matmul(ef, w_edge);
        let le = g.head_dot(he, att_edge, self.heads);
        let logits = g.add(ls, ld);
        let logits = g.add(logits, le);
        let logits = g.leaky_relu(logits, LEAKY_SLOPE);
        let alpha = g.segment_softmax(logits, edges.dst.clone(), n);
        let msg = g.gather_rows(hs, edges.src.clone());
        let msg = g.add(msg, he);
        let msg = g.mul_heads(msg, alpha);
        let agg = g.scatter_add_rows(msg, edges.dst.clone(), n);
        let bias = g.param(store, self.bias);
        let y = g.add_bias(agg, bias);
        Ok(self.activation.apply(g, y))
    }
}

/// Transformer-style block: self-attention then a ×4 feed-forward, each
/// with an optional pre-norm and optional residual connection.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub norm1: Option<LayerNorm>,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub norm2: Option<LayerNorm>,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
    pub residual: bool,
}

impl AttentionBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        head_dim: usize,
        norm: bool,
        residual: bool,
        rng: &mut Rng,
    ) -> Self {
        let inner = heads * head_dim;
        let norm1 = norm.then(|| LayerNorm::new(store, &format!("{name}.norm1"), dim));
        let wq = Linear::new(store, &format!("{name}.q"), dim, inner, Activation::Linear, rng);
        let wk = Linear::new(store, &format!("{name}.k"), dim, inner, Activation::Linear, rng);
        let wv = Linear::new(store, &format!("{name}.v"), dim, inner, Activation::Linear, rng);
        let wo = Linear::new(store, &format!("{name}.o"), inner, dim, Activation::Linear, rng);
        let norm2 = norm.then(|| LayerNorm::new(store, &format!("{name}.norm2"), dim));
        let ff1 = Linear::new(store, &format!("{name}.ff1"), dim, 4 * dim, Activation::Relu, rng);
        let ff2 = Linear::new(store, &format!("{name}.ff2"), 4 * dim, dim, Activation::Linear, rng);
        Self { norm1, wq, wk, wv, wo, norm2, ff1, ff2, heads, residual }
    }

    pub fn param_count(dim: usize, heads: usize, head_dim: usize, norm: bool) -> usize {
        let inner = heads * head_dim;
        let norms = if norm { 2 * LayerNorm::param_count(dim) } else { 0 };
        3 * Linear::param_count(dim, inner)
            + Linear::param_count(inner, dim)
            + Linear::param_count(dim, 4 * dim)
            + Linear::param_count(4 * dim, dim)
            + norms
    }

    pub fn dim(&self) -> usize {
        self.wq.in_dim
    }

    /// `x` holds `rows / group` independent sets of `group` tokens each.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, group: usize) -> Result<Var> {
        check_cols(g, x, self.dim(), "attention block")?;
        let (rows, _) = g.shape(x);
        if group == 0 || rows % group != 0 {
            return Err(Error::Contract(format!("{rows} tokens do not split into groups of {group}")));
        }
        let h = match &self.norm1 {
            Some(n) => n.forward(g, store, x)?,
            None => x,
        };
        let q = self.wq.forward(g, store, h)?;
        let k = self.wk.forward(g, store, h)?;
        let v = self.wv.forward(g, store, h)?;
        let att = g.group_attention(q, k, v, group, self.heads);
        let att = self.wo.forward(g, store, att)?;
        let x = if self.residual { g.add(x, att) } else { att };
        let h = match &self.norm2 {
            Some(n) => n.forward(g, store, x)?,
            None => x,
        };
        let f = self.ff1.forward(g, store, h)?;
        let f = self.ff2.forward(g, store, f)?;
        Ok(if self.residual { g.add(x, f) } else { f })
    }
}
