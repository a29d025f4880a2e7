//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation of one forward pass. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! returns the gradient of every parameter that was read through
//! [`Graph::param`]. The tape is discarded after use.

use std::rc::Rc;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::vonmises;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Softplus(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    Reshape(Var),
    SumAll(Var),
    SumCols(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, normed: Tensor, inv_std: Vec<f64> },
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    HeadDot(Var, Var),
    MulHeads(Var, Var),
    GroupAttention { q: Var, k: Var, v: Var, group: usize, heads: usize, probs: Vec<f64> },
    VonMisesLogPdf { x: Rc<Tensor>, mu: Var, kappa: Var },
    VonMisesEntropy(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A constant leaf; gradients flowing into it are dropped.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Reads a parameter. Repeated reads of the same id share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_vars.get(id.index()) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id));
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.rows(), 1);
        assert_eq!(av.cols(), bv.cols());
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        self.push(out, Op::AddBias(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Elementwise clamp; the gradient is zero wherever the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), f64::min);
        self.push(out, Op::Min(a, b))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshaped(rows, cols);
        self.push(out, Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `r × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.rows(), 1, (0..av.rows()).map(|r| av.row(r).iter().sum()).collect());
        self.push(out, Op::SumCols(a))
    }

    /// Row-wise layer normalization with learned `1 × n` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let (g, b) = (self.value(gamma), self.value(beta));
        assert_eq!(g.shape(), (1, cols));
        assert_eq!(b.shape(), (1, cols));
        let mut normed = Tensor::zeros(rows, cols);
        let mut out = Tensor::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let n = (row[c] - mean) * is;
                normed.row_mut(r)[c] = n;
                out.row_mut(r)[c] = n * g.data()[c] + b.data()[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, normed, inv_std })
    }

    /// `out[r] = a[idx[r]]`.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(idx.len(), av.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(av.row(i));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// `out[idx[r]] += a[r]` into `n_out` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Rc<[usize]>, n_out: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), idx.len());
        let mut out = Tensor::zeros(n_out, av.cols());
        for (r, &i) in idx.iter().enumerate() {
            for (o, &x) in out.row_mut(i).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        self.push(out, Op::ScatterAddRows(a, idx))
    }

    /// Column-wise softmax over the rows that share a segment id.
    pub fn segment_softmax(&mut self, a: Var, segments: Rc<[usize]>, n_segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), segments.len());
        let cols = av.cols();
        let mut max = Tensor::full(n_segments, cols, f64::NEG_INFINITY);
        for (r, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max.row_mut(s)[c];
                *m = m.max(av.get(r, c));
            }
        }
        let mut out = Tensor::zeros(av.rows(), cols);
        let mut denom = Tensor::zeros(n_segments, cols);
        for (r, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                let e = (av.get(r, c) - max.get(s, c)).exp();
                out.row_mut(r)[c] = e;
                denom.row_mut(s)[c] += e;
            }
        }
        for (r, &s) in segments.iter().enumerate() {
            for c in 0..cols {
                out.row_mut(r)[c] /= denom.get(s, c);
            }
        }
        self.push(out, Op::SegmentSoftmax(a, segments))
    }

    /// Per-head dot product: `a` is `r × (h·f)`, `att` is `1 × (h·f)`; result `r × h`.
    pub fn head_dot(&mut self, a: Var, att: Var, heads: usize) -> Var {
        let (av, tv) = (self.value(a), self.value(att));
        assert_eq!(tv.shape(), (1, av.cols()));
        assert_eq!(av.cols() % heads, 0);
        let f = av.cols() / heads;
        let mut out = Tensor::zeros(av.rows(), heads);
        for r in 0..av.rows() {
            let row = av.row(r);
            for h in 0..heads {
                out.row_mut(r)[h] = (0..f).map(|j| row[h * f + j] * tv.data()[h * f + j]).sum();
            }
        }
        self.push(out, Op::HeadDot(a, att))
    }

    /// Scales each head block of `a` (`r × (h·f)`) by the matching column of `w` (`r × h`).
    pub fn mul_heads(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert_eq!(av.rows(), wv.rows());
        let heads = wv.cols();
        assert_eq!(av.cols() % heads, 0);
        let f = av.cols() / heads;
        let mut out = av.clone();
        for r in 0..av.rows() {
            for h in 0..heads {
                let s = wv.get(r, h);
                for x in &mut out.row_mut(r)[h * f..(h + 1) * f] {
                    *x *= s;
                }
            }
        }
        self.push(out, Op::MulHeads(a, w))
    }

    /// Scaled dot-product self-attention within consecutive groups of `group`
    /// rows. `q`, `k`, `v` are `(g·group) × (heads·d)`; no masking.
    pub fn group_attention(&mut self, q: Var, k: Var, v: Var, group: usize, heads: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        assert_eq!(qv.shape(), kv.shape());
        assert_eq!(qv.shape(), vv.shape());
        let (rows, cols) = qv.shape();
        assert_eq!(rows % group, 0);
        assert_eq!(cols % heads, 0);
        let d = cols / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let n_groups = rows / group;
        let mut probs = vec![0.0; n_groups * heads * group * group];
        let mut out = Tensor::zeros(rows, cols);
        let mut scores = vec![0.0; group];
        for g in 0..n_groups {
            for h in 0..heads {
                let p = &mut probs[(g * heads + h) * group * group..][..group * group];
                for i in 0..group {
                    let qi = &qv.row(g * group + i)[h * d..(h + 1) * d];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = &kv.row(g * group + j)[h * d..(h + 1) * d];
                        *s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*s);
                    }
                    let mut z = 0.0;
                    for (j, s) in scores.iter().enumerate() {
                        let e = (s - max).exp();
                        p[i * group + j] = e;
                        z += e;
                    }
                    for j in 0..group {
                        p[i * group + j] /= z;
                        let pij = p[i * group + j];
                        let vj = &vv.row(g * group + j)[h * d..(h + 1) * d];
                        let o = &mut out.row_mut(g * group + i)[h * d..(h + 1) * d];
                        for (oc, &vc) in o.iter_mut().zip(vj) {
                            *oc += pij * vc;
                        }
                    }
                }
            }
        }
        self.push(out, Op::GroupAttention { q, k, v, group, heads, probs })
    }

    /// Elementwise von Mises log-density of the constant angles `x`.
    pub fn vonmises_logpdf(&mut self, x: Rc<Tensor>, mu: Var, kappa: Var) -> Var {
        let (mv, kv) = (self.value(mu), self.value(kappa));
        assert_eq!(x.shape(), mv.shape());
        assert_eq!(x.shape(), kv.shape());
        let data = x
            .data()
            .iter()
            .zip(mv.data().iter().zip(kv.data()))
            .map(|(&a, (&m, &k))| vonmises::logpdf_unchecked(a, m, k))
            .collect();
        let out = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(out, Op::VonMisesLogPdf { x, mu, kappa })
    }

    pub fn vonmises_entropy(&mut self, kappa: Var) -> Var {
        let out = self.value(kappa).map(vonmises::entropy_unchecked);
        self.push(out, Op::VonMisesEntropy(kappa))
    }

    /// Gradients of the scalar `loss` with respect to every parameter read
    /// into this graph. Parameters off the loss path get zero gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("backward on a node that was never recorded".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(store);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_nt(self.value(*b)));
                    acc(*b, self.value(*a).matmul_tn(&g));
                }
                Op::AddBias(a, b) => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    acc(*a, g);
                    acc(*b, db);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, g.reshaped(r, c));
                }
                Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y))),
                Op::Relu(a) => acc(*a, g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
                Op::LeakyRelu(a, s) => acc(*a, g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { s * x })),
                Op::Softplus(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x * sigmoid(y))),
                Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
                Op::Square(a) => acc(*a, g.zip_map(self.value(*a), |x, y| 2.0 * x * y)),
                Op::Clamp(a, lo, hi) => {
                    acc(*a, g.zip_map(self.value(*a), |x, y| if y > *lo && y < *hi { x } else { 0.0 }))
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let pick_a = av.zip_map(bv, |x, y| if x <= y { 1.0 } else { 0.0 });
                    acc(*a, g.zip_map(&pick_a, |x, m| x * m));
                    acc(*b, g.zip_map(&pick_a, |x, m| x * (1.0 - m)));
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, Tensor::full(r, c, g.item()));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.shape(*a);
                    let mut t = Tensor::zeros(r, c);
                    for i in 0..r {
                        t.row_mut(i).fill(g.get(i, 0));
                    }
                    acc(*a, t);
                }
                Op::LayerNorm { x, gamma, beta, normed, inv_std } => {
                    let (rows, cols) = normed.shape();
                    let gv = self.value(*gamma);
                    let mut dx = Tensor::zeros(rows, cols);
                    let mut dgamma = Tensor::zeros(1, cols);
                    let mut dbeta = Tensor::zeros(1, cols);
                    let mut dn = vec![0.0; cols];
                    for r in 0..rows {
                        let (gr, nr) = (g.row(r), normed.row(r));
                        for c in 0..cols {
                            dgamma.data_mut()[c] += gr[c] * nr[c];
                            dbeta.data_mut()[c] += gr[c];
                            dn[c] = gr[c] * gv.data()[c];
                        }
                        let mean_dn = dn.iter().sum::<f64>() / cols as f64;
                        let mean_dn_n = dn.iter().zip(nr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            dx.row_mut(r)[c] = inv_std[r] * (dn[c] - mean_dn - nr[c] * mean_dn_n);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dgamma);
                    acc(*beta, dbeta);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut t = Tensor::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &x) in t.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(*a, t);
                }
                Op::ScatterAddRows(a, idx) => {
                    let mut t = Tensor::zeros(idx.len(), g.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        t.row_mut(k).copy_from_slice(g.row(i));
                    }
                    acc(*a, t);
                }
                Op::SegmentSoftmax(a, segments) => {
                    let y = &node.value;
                    let cols = y.cols();
                    let n_seg = segments.iter().max().map_or(0, |m| m + 1);
                    let mut dot = Tensor::zeros(n_seg, cols);
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            dot.row_mut(s)[c] += y.get(r, c) * g.get(r, c);
                        }
                    }
                    let mut t = Tensor::zeros(y.rows(), cols);
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..cols {
                            t.row_mut(r)[c] = y.get(r, c) * (g.get(r, c) - dot.get(s, c));
                        }
                    }
                    acc(*a, t);
                }
                Op::HeadDot(a, att) => {
                    let (av, tv) = (self.value(*a), self.value(*att));
                    let heads = g.cols();
                    let f = av.cols() / heads;
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let mut datt = Tensor::zeros(1, av.cols());
                    for r in 0..av.rows() {
                        for h in 0..heads {
                            let gh = g.get(r, h);
                            for j in 0..f {
                                let c = h * f + j;
                                da.row_mut(r)[c] = gh * tv.data()[c];
                                datt.data_mut()[c] += gh * av.get(r, c);
                            }
                        }
                    }
                    acc(*a, da);
                    acc(*att, datt);
                }
                Op::MulHeads(a, w) => {
                    let (av, wv) = (self.value(*a), self.value(*w));
                    let heads = wv.cols();
                    let f = av.cols() / heads;
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let mut dw = Tensor::zeros(wv.rows(), heads);
                    for r in 0..av.rows() {
                        for h in 0..heads {
                            let s = wv.get(r, h);
                            let mut acc_w = 0.0;
                            for j in 0..f {
                                let c = h * f + j;
                                da.row_mut(r)[c] = g.get(r, c) * s;
                                acc_w += g.get(r, c) * av.get(r, c);
                            }
                            dw.row_mut(r)[h] = acc_w;
                        }
                    }
                    acc(*a, da);
                    acc(*w, dw);
                }
                Op::GroupAttention { q, k, v, group, heads, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, cols) = qv.shape();
                    let (group, heads) = (*group, *heads);
                    let d = cols / heads;
                    let scale = 1.0 / (d as f64).sqrt();
                    let mut dq = Tensor::zeros(rows, cols);
                    let mut dk = Tensor::zeros(rows, cols);
                    let mut dv = Tensor::zeros(rows, cols);
                    let mut dp = vec![0.0; group];
                    for gi in 0..rows / group {
                        for h in 0..heads {
                            let p = &probs[(gi * heads + h) * group * group..][..group * group];
                            let span = h * d..(h + 1) * d;
                            for i in 0..group {
                                let gout = &g.row(gi * group + i)[span.clone()];
                                for j in 0..group {
                                    let vj = &vv.row(gi * group + j)[span.clone()];
                                    dp[j] = gout.iter().zip(vj).map(|(a, b)| a * b).sum();
                                    let pij = p[i * group + j];
                                    for (o, &x) in dv.row_mut(gi * group + j)[span.clone()].iter_mut().zip(gout) {
                                        *o += pij * x;
                                    }
                                }
                                let row_dot: f64 = (0..group).map(|j| p[i * group + j] * dp[j]).sum();
                                for j in 0..group {
                                    let ds = p[i * group + j] * (dp[j] - row_dot) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let kj = &kv.row(gi * group + j)[span.clone()];
                                    for (o, &x) in dq.row_mut(gi * group + i)[span.clone()].iter_mut().zip(kj) {
                                        *o += ds * x;
                                    }
                                    let qi = &qv.row(gi * group + i)[span.clone()];
                                    for (o, &x) in dk.row_mut(gi * group + j)[span.clone()].iter_mut().zip(qi) {
                                        *o += ds * x;
                                    }
                                }
                            }
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                    acc(*v, dv);
                }
                Op::VonMisesLogPdf { x, mu, kappa } => {
                    let (mv, kv) = (self.value(*mu), self.value(*kappa));
                    let mut dmu = Tensor::zeros(x.rows(), x.cols());
                    let mut dkappa = Tensor::zeros(x.rows(), x.cols());
                    for i in 0..x.len() {
                        let (a, m, k) = (x.data()[i], mv.data()[i], kv.data()[i]);
                        let (ratio, _) = vonmises::bessel_ratio(k);
                        dmu.data_mut()[i] = g.data()[i] * k * (a - m).sin();
                        dkappa.data_mut()[i] = g.data()[i] * ((a - m).cos() - ratio);
                    }
                    acc(*mu, dmu);
                    acc(*kappa, dkappa);
                }
                Op::VonMisesEntropy(kappa) => {
                    acc(*kappa, g.zip_map(self.value(*kappa), |x, k| x * vonmises::entropy_grad(k)))
                }
            }
        }
        Ok(out)
    }
}
