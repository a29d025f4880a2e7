//! Named parameter storage, gradients and the Adam optimizer.

use std::hash::{DefaultHasher, Hasher};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Hash of every name, shape and value bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (name, t) in self.iter() {
            h.write(name.as_bytes());
            h.write_usize(t.rows());
            h.write_usize(t.cols());
            for x in t.data() {
                h.write_u64(x.to_bits());
            }
        }
        h.finish()
    }

    /// Replaces all values with those of `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(other.names.iter().map(String::as_str).zip(&other.tensors))?;
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }

    pub(crate) fn check_layout<'a>(&self, other: impl Iterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut n = 0;
        for (i, (name, t)) in other.enumerate() {
            let Some(own) = self.names.get(i) else {
                return Err(Error::Contract(format!("unexpected parameter {name}")));
            };
            if own != name || self.tensors[i].shape() != t.shape() {
                return Err(Error::Contract(format!(
                    "parameter {i} is {own} {:?}, got {name} {:?}",
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
            n += 1;
        }
        if n != self.len() {
            return Err(Error::Contract(format!("expected {} parameters, got {n}", self.len())));
        }
        Ok(())
    }
}

/// One gradient tensor per parameter, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { tensors: store.tensors.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        self.tensors[id.0].add_assign(g);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|&x| x == 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.tensors.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in store.tensors.iter_mut().zip(&grads.tensors).zip(self.m.iter_mut().zip(&mut self.v)) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                if update != 0.0 {
                    p[i] -= update;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", Tensor::from_vec(1, 2, vec![1.0, -2.0]));
        s.add("b", Tensor::scalar(0.5));
        s
    }

    #[test]
    fn adam_zero_lr_keeps_bits() {
        let mut s = store();
        let before = s.fingerprint();
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(ParamId(0), &Tensor::from_vec(1, 2, vec![3.0, -1.0]));
        Adam::new(&s).step(&mut s, &g, 0.0);
        assert_eq!(before, s.fingerprint());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = store();
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(ParamId(0), &Tensor::from_vec(1, 2, vec![3.0, -1.0]));
        Adam::new(&s).step(&mut s, &g, 0.1);
        let a = s.get(ParamId(0)).data();
        assert!((a[0] - 0.9).abs() < 1e-6 && (a[1] + 1.9).abs() < 1e-6);
        assert_eq!(s.get(ParamId(1)).item(), 0.5);
    }

    #[test]
    fn clipping_bounds_norm() {
        let s = store();
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(ParamId(0), &Tensor::from_vec(1, 2, vec![3.0, 4.0]));
        assert_eq!(g.clip_global_norm(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let mut a = store();
        let mut b = ParamStore::new();
        b.add("a", Tensor::zeros(2, 1));
        b.add("b", Tensor::scalar(0.0));
        assert!(a.copy_from(&b).is_err());
    }
}
