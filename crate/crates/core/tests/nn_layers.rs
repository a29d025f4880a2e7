use std::f64::consts::PI;

use proptest::prelude::*;
use wakesteer::nn::check::check_gradients;
use wakesteer::nn::{Activation, AttentionBlock, EdgeList, GatLayer, Graph, LayerNorm, Linear, ParamStore, Tensor, Var};
use wakesteer::rng::{substream, Purpose, Rng};
use wakesteer::Error;

const EPS: f64 = 1e-6;

fn rng(i: u64) -> Rng {
    substream(11, Purpose::Test, i)
}

/// Random-weighted sum so no coordinate's gradient cancels by symmetry.
fn weighted_sum(g: &mut Graph, y: Var, weights: &Tensor) -> Var {
    let w = g.input(weights.clone());
    let p = g.mul(y, w);
    g.sum(p)
}

fn random_graph(n: usize, n_edges: usize, rng: &mut Rng) -> EdgeList {
    use rand::Rng as _;
    let mut edges = Vec::new();
    let mut feats = Vec::new();
    while edges.len() < n_edges {
        let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
        if s != d && !edges.contains(&(s, d)) {
            edges.push((s, d));
            feats.push((0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
        }
    }
    EdgeList::with_self_loops(n, &edges, &feats, 3).unwrap()
}

#[test]
fn sum_gradient_is_ones() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]));
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let s = g.sum(xv);
    let grads = g.backward(s, &store).unwrap();
    assert!(grads.get(x).data().iter().all(|&v| v == 1.0));
}

#[test]
fn two_layer_chain_matches_product_rule() {
    // y = w2 · tanh(w1 · x), scalars: dy/dw1 = w2 · (1 − tanh²(w1 x)) · x
    let mut store = ParamStore::new();
    let w1 = store.add("w1", Tensor::scalar(0.7));
    let w2 = store.add("w2", Tensor::scalar(-1.3));
    let x = 0.4;
    let mut g = Graph::new();
    let xi = g.input(Tensor::scalar(x));
    let a = g.param(&store, w1);
    let b = g.param(&store, w2);
    let h = g.matmul(xi, a);
    let h = g.tanh(h);
    let y = g.matmul(h, b);
    let grads = g.backward(y, &store).unwrap();
    let t = (0.7f64 * x).tanh();
    assert!((grads.get(w1).item() - (-1.3) * (1.0 - t * t) * x).abs() < 1e-15);
    assert!((grads.get(w2).item() - t).abs() < 1e-15);
}

#[test]
fn unused_parameters_get_zero_gradient() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::scalar(2.0));
    let b = store.add("b", Tensor::from_vec(1, 2, vec![1.0, 1.0]));
    let mut g = Graph::new();
    let av = g.param(&store, a);
    let _ = g.param(&store, b);
    let y = g.square(av);
    let grads = g.backward(y, &store).unwrap();
    assert_eq!(grads.get(a).item(), 4.0);
    assert!(grads.get(b).data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_contract_errors() {
    let store = ParamStore::new();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(2, 2));
    assert!(matches!(g.backward(x, &store), Err(Error::Contract(_))));
    let mut other = Graph::new();
    for _ in 0..5 {
        other.input(Tensor::scalar(1.0));
    }
    let foreign = other.input(Tensor::scalar(1.0));
    assert!(matches!(Graph::new().backward(foreign, &store), Err(Error::Contract(_))));
}

#[test]
fn linear_identity_passes_input_through() {
    let mut store = ParamStore::new();
    let layer = Linear::new(&mut store, "fc", 3, 3, Activation::Linear, &mut rng(0));
    let mut eye = Tensor::zeros(3, 3);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    *store.get_mut(layer.w) = eye;
    let x = Tensor::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]);
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let y = layer.forward(&mut g, &store, xi).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn linear_rejects_wrong_width() {
    let mut store = ParamStore::new();
    let layer = Linear::new(&mut store, "fc", 3, 2, Activation::Tanh, &mut rng(0));
    let mut g = Graph::new();
    let xi = g.input(Tensor::zeros(1, 4));
    assert!(matches!(layer.forward(&mut g, &store, xi), Err(Error::Contract(_))));
}

#[test]
fn tanh_pi_saturates_at_pi() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(1, 2, vec![50.0, -50.0]));
    let y = Activation::TanhPi.apply(&mut g, x);
    assert!((g.value(y).data()[0] - PI).abs() < 1e-12);
    assert!((g.value(y).data()[1] + PI).abs() < 1e-12);
}

fn fc_check(seed: u64, activation: Activation) -> f64 {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let layer = Linear::new(&mut store, "fc", 8, 8, activation, &mut r);
    let x = store.add("x", Tensor::uniform(4, 8, 1.0, &mut r));
    let w = Tensor::uniform(4, 8, 1.0, &mut r);
    let loss = |s: &ParamStore| -> wakesteer::Result<(Graph, Var)> {
        let mut g = Graph::new();
        let xv = g.param(s, x);
        let y = layer.forward(&mut g, s, xv)?;
        let l = weighted_sum(&mut g, y, &w);
        Ok((g, l))
    };
    let (g, l) = loss(&store).unwrap();
    let grads = g.backward(l, &store).unwrap();
    check_gradients(&store, &grads, EPS, usize::MAX, &mut r, |s| {
        let (g, l) = loss(s)?;
        Ok(g.value(l).item())
    })
    .unwrap()
    .max_rel_error
}

#[test]
fn fc_gradients_match_finite_differences() {
    for (i, act) in
        [Activation::Linear, Activation::Tanh, Activation::TanhPi, Activation::SoftplusPlusOne].into_iter().enumerate()
    {
        let err = fc_check(i as u64, act);
        assert!(err < 1e-6, "{act:?}: {err}");
    }
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    let mut r = rng(40);
    let mut store = ParamStore::new();
    let ln = LayerNorm::new(&mut store, "ln", 6);
    *store.get_mut(ln.gamma) = Tensor::uniform(1, 6, 1.0, &mut r);
    *store.get_mut(ln.beta) = Tensor::uniform(1, 6, 1.0, &mut r);
    let x = store.add("x", Tensor::uniform(3, 6, 2.0, &mut r));
    let w = Tensor::uniform(3, 6, 1.0, &mut r);
    let run = |s: &ParamStore| {
        let mut g = Graph::new();
        let xv = g.param(s, x);
        let y = ln.forward(&mut g, s, xv).unwrap();
        let l = weighted_sum(&mut g, y, &w);
        (g, l)
    };
    let (g, l) = run(&store);
    let grads = g.backward(l, &store).unwrap();
    let rep = check_gradients(&store, &grads, EPS, usize::MAX, &mut r, |s| {
        let (g, l) = run(s);
        Ok(g.value(l).item())
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn gat_without_edges_is_a_dense_layer() {
    let mut r = rng(50);
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 5, 3, 2, 4, Activation::Tanh, &mut r);
    *store.get_mut(gat.bias) = Tensor::uniform(1, 8, 1.0, &mut r);
    let x = Tensor::uniform(4, 5, 1.0, &mut r);
    let edges = EdgeList::with_self_loops(4, &[], &[], 3).unwrap();
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let y = gat.forward(&mut g, &store, xi, &edges).unwrap();
    let expected = x.matmul(store.get(gat.w_src));
    let bias = store.get(gat.bias).data();
    for r in 0..4 {
        for c in 0..8 {
            let e = (expected.get(r, c) + bias[c]).tanh();
            assert!((g.value(y).get(r, c) - e).abs() < 1e-14);
        }
    }
}

#[test]
fn gat_rejects_dangling_edges() {
    assert!(matches!(EdgeList::with_self_loops(3, &[(0, 3)], &[vec![0.0; 3]], 3), Err(Error::Contract(_))));
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 2, 3, 1, 2, Activation::Linear, &mut rng(0));
    let edges = EdgeList::with_self_loops(4, &[(0, 3)], &[vec![0.0; 3]], 3).unwrap();
    let mut g = Graph::new();
    let xi = g.input(Tensor::zeros(3, 2));
    assert!(matches!(gat.forward(&mut g, &store, xi, &edges), Err(Error::Contract(_))));
}

#[test]
fn gat_is_permutation_equivariant() {
    let mut r = rng(60);
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 4, 3, 3, 2, Activation::Tanh, &mut r);
    for id in [gat.att_src, gat.att_dst, gat.att_edge] {
        *store.get_mut(id) = Tensor::uniform(1, 6, 1.0, &mut r);
    }
    let n = 5;
    let x = Tensor::uniform(n, 4, 1.0, &mut r);
    let edges = [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (1, 4)];
    let feats: Vec<Vec<f64>> = edges.iter().map(|&(s, d)| vec![s as f64 * 0.1, d as f64 * -0.2, 0.3]).collect();
    let perm = [3, 0, 4, 1, 2]; // new index of old node i
    let out = |x: &Tensor, edges: &[(usize, usize)]| {
        let el = EdgeList::with_self_loops(n, edges, &feats, 3).unwrap();
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let y = gat.forward(&mut g, &store, xi, &el).unwrap();
        g.value(y).clone()
    };
    let base = out(&x, &edges);
    let mut xp = Tensor::zeros(n, 4);
    for i in 0..n {
        xp.row_mut(perm[i]).copy_from_slice(x.row(i));
    }
    let ep: Vec<(usize, usize)> = edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
    let permuted = out(&xp, &ep);
    for i in 0..n {
        for (a, b) in base.row(i).iter().zip(permuted.row(perm[i])) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn gat_check(seed: u64) -> f64 {
    let mut r = rng(100 + seed);
    let mut store = ParamStore::new();
    let gat = GatLayer::new(&mut store, "gat", 3, 3, 2, 3, Activation::Tanh, &mut r);
    for id in [gat.att_src, gat.att_dst, gat.att_edge, gat.bias] {
        *store.get_mut(id) = Tensor::uniform(1, 6, 1.0, &mut r);
    }
    let x = store.add("x", Tensor::uniform(4, 3, 1.0, &mut r));
    let edges = random_graph(4, 5, &mut r);
    let w = Tensor::uniform(4, 6, 1.0, &mut r);
    let run = |s: &ParamStore| {
        let mut g = Graph::new();
        let xv = g.param(s, x);
        let y = gat.forward(&mut g, s, xv, &edges).unwrap();
        let l = weighted_sum(&mut g, y, &w);
        (g, l)
    };
    let (g, l) = run(&store);
    let grads = g.backward(l, &store).unwrap();
    check_gradients(&store, &grads, EPS, usize::MAX, &mut r, |s| {
        let (g, l) = run(s);
        Ok(g.value(l).item())
    })
    .unwrap()
    .max_rel_error
}

#[test]
fn gat_gradients_match_finite_differences() {
    for seed in 0..5 {
        let err = gat_check(seed);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn single_token_attention_returns_values() {
    let mut r = rng(70);
    let mut g = Graph::new();
    let q = g.input(Tensor::uniform(3, 4, 1.0, &mut r));
    let k = g.input(Tensor::uniform(3, 4, 1.0, &mut r));
    let v = g.input(Tensor::uniform(3, 4, 1.0, &mut r));
    let out = g.group_attention(q, k, v, 1, 2);
    assert_eq!(g.value(out), g.value(v));
}

#[test]
fn single_token_block_follows_value_path() {
    let mut r = rng(71);
    let mut store = ParamStore::new();
    let block = AttentionBlock::new(&mut store, "blk", 4, 2, 2, false, false, &mut r);
    let x = Tensor::uniform(1, 4, 1.0, &mut r);
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let y = block.forward(&mut g, &store, xi, 1).unwrap();
    let lin = |t: &Tensor, l: &Linear| {
        let mut o = t.matmul(store.get(l.w));
        o.add_assign(store.get(l.b));
        o
    };
    let expected = lin(&lin(&lin(&lin(&x, &block.wv), &block.wo), &block.ff1).map(|v| v.max(0.0)), &block.ff2);
    for (a, b) in g.value(y).data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_block_is_permutation_equivariant() {
    let mut r = rng(72);
    let mut store = ParamStore::new();
    let block = AttentionBlock::new(&mut store, "blk", 8, 2, 4, true, true, &mut r);
    let x = Tensor::uniform(5, 8, 1.0, &mut r);
    let perm = [2, 4, 0, 1, 3];
    let run = |x: &Tensor| {
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let y = block.forward(&mut g, &store, xi, 5).unwrap();
        g.value(y).clone()
    };
    let base = run(&x);
    let mut xp = Tensor::zeros(5, 8);
    for i in 0..5 {
        xp.row_mut(perm[i]).copy_from_slice(x.row(i));
    }
    let permuted = run(&xp);
    for i in 0..5 {
        for (a, b) in base.row(i).iter().zip(permuted.row(perm[i])) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_block_rejects_bad_grouping() {
    let mut store = ParamStore::new();
    let block = AttentionBlock::new(&mut store, "blk", 4, 2, 2, true, true, &mut rng(0));
    let mut g = Graph::new();
    let xi = g.input(Tensor::zeros(5, 4));
    assert!(matches!(block.forward(&mut g, &store, xi, 3), Err(Error::Contract(_))));
}

fn mhsa_check(seed: u64, norm: bool) -> f64 {
    let mut r = rng(200 + seed);
    let mut store = ParamStore::new();
    let block = AttentionBlock::new(&mut store, "blk", 8, 2, 4, norm, true, &mut r);
    if let (Some(n1), Some(n2)) = (&block.norm1, &block.norm2) {
        for id in [n1.gamma, n1.beta, n2.gamma, n2.beta] {
            *store.get_mut(id) = Tensor::uniform(1, 8, 1.0, &mut r);
        }
    }
    // two independent groups of three tokens
    let x = store.add("x", Tensor::uniform(6, 8, 1.0, &mut r));
    let w = Tensor::uniform(6, 8, 1.0, &mut r);
    let run = |s: &ParamStore| {
        let mut g = Graph::new();
        let xv = g.param(s, x);
        let y = block.forward(&mut g, s, xv, 3).unwrap();
        let l = weighted_sum(&mut g, y, &w);
        (g, l)
    };
    let (g, l) = run(&store);
    let grads = g.backward(l, &store).unwrap();
    check_gradients(&store, &grads, EPS, 40, &mut r, |s| {
        let (g, l) = run(s);
        Ok(g.value(l).item())
    })
    .unwrap()
    .max_rel_error
}

#[test]
fn mhsa_gradients_match_finite_differences() {
    for seed in 0..3 {
        for norm in [false, true] {
            let err = mhsa_check(seed, norm);
            assert!(err < 1e-5, "seed {seed} norm {norm}: {err}");
        }
    }
}

#[test]
fn von_mises_ops_match_finite_differences() {
    let mut r = rng(300);
    let mut store = ParamStore::new();
    let mu = store.add("mu", Tensor::uniform(2, 3, 3.0, &mut r));
    let kappa = store.add("kappa", Tensor::from_vec(2, 3, vec![1.2, 3.0, 10.0, 49.0, 51.0, 400.0]));
    let x = std::rc::Rc::new(Tensor::uniform(2, 3, 3.0, &mut r));
    let run = |s: &ParamStore| {
        let mut g = Graph::new();
        let m = g.param(s, mu);
        let k = g.param(s, kappa);
        let lp = g.vonmises_logpdf(x.clone(), m, k);
        let h = g.vonmises_entropy(k);
        let t = g.add(lp, h);
        let l = g.sum(t);
        (g, l)
    };
    let (g, l) = run(&store);
    let grads = g.backward(l, &store).unwrap();
    let rep = check_gradients(&store, &grads, EPS, usize::MAX, &mut r, |s| {
        let (g, l) = run(s);
        Ok(g.value(l).item())
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn clamp_and_min_route_gradients() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::from_vec(1, 3, vec![-2.0, 0.5, 3.0]));
    let b = store.add("b", Tensor::from_vec(1, 3, vec![0.0, 1.0, 1.0]));
    let mut g = Graph::new();
    let av = g.param(&store, a);
    let bv = g.param(&store, b);
    let c = g.clamp(av, -1.0, 1.0);
    let m = g.min(av, bv);
    let s = g.add(c, m);
    let l = g.sum(s);
    let grads = g.backward(l, &store).unwrap();
    assert_eq!(grads.get(a).data(), &[1.0, 2.0, 0.0]);
    assert_eq!(grads.get(b).data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut r = rng(400);
        let mut store = ParamStore::new();
        let block = AttentionBlock::new(&mut store, "blk", 8, 2, 4, true, true, &mut r);
        let x = Tensor::uniform(6, 8, 1.0, &mut r);
        let mut g = Graph::new();
        let xi = g.input(x);
        let y = block.forward(&mut g, &store, xi, 3).unwrap();
        let l = g.sum(y);
        g.backward(l, &store).unwrap()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softplus_plus_one_exceeds_one(x in -1e6f64..1e6) {
        let mut g = Graph::new();
        let xi = g.input(Tensor::scalar(x));
        let y = Activation::SoftplusPlusOne.apply(&mut g, xi);
        prop_assert!(g.value(y).item() > 1.0 || (x < -36.0 && g.value(y).item() == 1.0));
        prop_assert!(g.value(y).item().is_finite());
    }

    #[test]
    fn tanh_pi_is_bounded(x in -1e6f64..1e6) {
        let mut g = Graph::new();
        let xi = g.input(Tensor::scalar(x));
        let y = Activation::TanhPi.apply(&mut g, xi);
        prop_assert!(g.value(y).item().abs() <= PI);
    }
}
