//! Actor-critic networks with a von Mises action head.
//!
//! Three architectures share one output contract: per-turbine location
//! `μ ∈ (−π, π)`, per-turbine concentration `κ > 1`, and a scalar value.
//!
//! * [`Variant::V0`]: fully connected on the concatenated observation.
//! * [`Variant::V1`]: graph attention over the wake graph.
//! * [`Variant::V2`]: summed wind/forecast/positional/orientation
//!   embeddings followed by self-attention blocks over turbines.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use crate::env::{
    flat_features, Observation, FORECAST_FEATURES, NODE_FEATURES, POSITIONAL_FEATURES, TURBINE_FEATURES,
    WIND_FEATURES,
};
use crate::error::{Error, Result};
use crate::geometry::EDGE_FEATURES;
use crate::nn::{Activation, AttentionBlock, Checkpoint, EdgeList, GatLayer, Graph, LayerNorm, Linear, ParamStore, Tensor, Var};
use crate::rng::{substream, Purpose, Rng};
use crate::vonmises;

use Activation::{Linear as Lin, SoftplusPlusOne, Tanh, TanhPi};

pub const MAX_ACTION_DEG: f64 = 20.0;
/// Init bound multiplier for the final μ layers, so early actions stay near zero.
const HEAD_INIT_SCALE: f64 = 0.1;

/// Radians in `[−π, π]` to a rotation in degrees in `[−20, 20]`.
pub fn action_denormalize(x: f64) -> f64 {
    x * (MAX_ACTION_DEG / std::f64::consts::PI)
}

/// Inverse of [`action_denormalize`].
pub fn action_normalize(deg: f64) -> f64 {
    deg * (std::f64::consts::PI / MAX_ACTION_DEG)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    V0,
    V1,
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pooling {
    Mean,
    Sum,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($var:path => $s:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($var => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($var),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), s))),
                }
            }
        }
    };
}

text_enum!(Variant, "model variant", Variant::V0 => "v0", Variant::V1 => "v1", Variant::V2 => "v2");
text_enum!(Scale, "scale", Scale::Paper => "paper", Scale::Desk => "desk");
text_enum!(Pooling, "pooling", Pooling::Mean => "mean", Pooling::Sum => "sum");

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub scale: Scale,
    pub n_turbines: usize,
    /// Critic pooling over turbine embeddings (V1, V2).
    pub pooling: Pooling,
    /// Pre-norm layer normalization inside attention blocks (V2).
    pub attention_norm: bool,
    /// Residual connections around attention sublayers (V2).
    pub attention_residual: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, scale: Scale, n_turbines: usize) -> Self {
        Self { variant, scale, n_turbines, pooling: Pooling::Mean, attention_norm: true, attention_residual: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_turbines == 0 {
            return Err(Error::Config("model needs at least one turbine".into()));
        }
        Ok(())
    }

    pub fn widths(&self) -> Widths {
        match self.scale {
            Scale::Paper => Widths::PAPER,
            Scale::Desk => Widths::DESK,
        }
    }

    /// Number of scalar parameters, computed from shapes alone.
    pub fn param_count(&self) -> usize {
        let w = self.widths();
        let n = self.n_turbines;
        let fc = Linear::param_count;
        match self.variant {
            Variant::V0 => {
                let [s1, s2] = w.v0_shared;
                let [a1, a2] = w.v0_actor;
                let [c1, c2] = w.v0_critic;
                fc(flat_features(n), s1)
                    + fc(s1, s2)
                    + fc(s2, a1)
                    + fc(a1, a2)
                    + 2 * fc(a2, n)
                    + fc(s2, c1)
                    + fc(c1, c2)
                    + fc(c2, 1)
            }
            Variant::V1 => {
                let gat = |i, h, d| GatLayer::param_count(i, EDGE_FEATURES, h, d);
                let h = w.v1_heads;
                let shared = h * w.v1_shared;
                let [a1, a2] = w.v1_actor;
                let [c1, c2] = w.critic;
                gat(NODE_FEATURES, h, w.v1_shared)
                    + gat(shared, h, w.v1_shared)
                    + gat(shared, h, a1)
                    + gat(h * a1, h, a2)
                    + 2 * gat(h * a2, 1, 1)
                    + fc(shared, c1)
                    + fc(c1, c2)
                    + fc(c2, 1)
            }
            Variant::V2 => {
                let d = w.v2_dim;
                let [a1, a2] = w.v2_actor;
                let [c1, c2] = w.critic;
                let embed = |i| fc(i, d) + fc(d, d);
                let norm = if self.attention_norm { LayerNorm::param_count(d) } else { 0 };
                embed(WIND_FEATURES)
                    + embed(FORECAST_FEATURES)
                    + GatLayer::param_count(POSITIONAL_FEATURES, EDGE_FEATURES, 1, d)
                    + embed(TURBINE_FEATURES)
                    + w.v2_blocks * AttentionBlock::param_count(d, w.v2_heads, w.v2_head_dim, self.attention_norm)
                    + norm
                    + 2 * (fc(d, a1) + fc(a1, a2) + fc(a2, 1))
                    + fc(d, c1)
                    + fc(c1, c2)
                    + fc(c2, 1)
            }
        }
    }

    fn meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("variant".into(), self.variant.to_string());
        m.insert("scale".into(), self.scale.to_string());
        m.insert("n_turbines".into(), self.n_turbines.to_string());
        m.insert("pooling".into(), self.pooling.to_string());
        m.insert("attention_norm".into(), self.attention_norm.to_string());
        m.insert("attention_residual".into(), self.attention_residual.to_string());
        m
    }

    fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Config(format!("checkpoint metadata lacks {k}")));
        let flag = |k: &str| -> Result<bool> {
            get(k)?.parse().map_err(|_| Error::Config(format!("checkpoint metadata {k} is not a boolean")))
        };
        Ok(Self {
            variant: get("variant")?.parse()?,
            scale: get("scale")?.parse()?,
            n_turbines: get("n_turbines")?
                .parse()
                .map_err(|_| Error::Config("checkpoint metadata n_turbines is not an integer".into()))?,
            pooling: get("pooling")?.parse()?,
            attention_norm: flag("attention_norm")?,
            attention_residual: flag("attention_residual")?,
        })
    }
}

/// Layer widths of one scale profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    pub v0_shared: [usize; 2],
    pub v0_actor: [usize; 2],
    pub v0_critic: [usize; 2],
    pub v1_heads: usize,
    /// Per-head width of the shared graph layers.
    pub v1_shared: usize,
    /// Per-head widths of the actor graph layers.
    pub v1_actor: [usize; 2],
    pub v2_dim: usize,
    pub v2_heads: usize,
    pub v2_head_dim: usize,
    pub v2_blocks: usize,
    pub v2_actor: [usize; 2],
    /// Hidden widths of the V1/V2 critic.
    pub critic: [usize; 2],
}

impl Widths {
    pub const PAPER: Widths = Widths {
        v0_shared: [1024, 4096],
        v0_actor: [2048, 256],
        v0_critic: [2048, 256],
        v1_heads: 3,
        v1_shared: 1024,
        v1_actor: [128, 64],
        v2_dim: 256,
        v2_heads: 3,
        v2_head_dim: 256,
        v2_blocks: 3,
        v2_actor: [128, 64],
        critic: [128, 64],
    };

    pub const DESK: Widths = Widths {
        v0_shared: [64, 256],
        v0_actor: [128, 16],
        v0_critic: [128, 16],
        v1_heads: 3,
        v1_shared: 64,
        v1_actor: [8, 4],
        v2_dim: 16,
        v2_heads: 2,
        v2_head_dim: 8,
        v2_blocks: 3,
        v2_actor: [8, 4],
        critic: [8, 4],
    };
}

/// A batch of observations laid out for every variant's inputs.
#[derive(Debug, Clone)]
pub struct ObsBatch {
    pub batch: usize,
    pub n_turbines: usize,
    /// `B × flat_features(N)`.
    pub flat: Tensor,
    /// `B·N × NODE_FEATURES`, sample-major.
    pub nodes: Tensor,
    /// `B·N × POSITIONAL_FEATURES`.
    pub positional: Tensor,
    /// `B × WIND_FEATURES`.
    pub wind: Tensor,
    /// `B × FORECAST_FEATURES`.
    pub forecast: Tensor,
    /// `B·N × TURBINE_FEATURES`.
    pub orientations: Tensor,
    pub edges: EdgeList,
    /// Sample index of every node row.
    pub sample_of_node: Rc<[usize]>,
}

impl ObsBatch {
    pub fn new(obs: &[&Observation]) -> Result<Self> {
        let Some(first) = obs.first() else {
            return Err(Error::Contract("empty observation batch".into()));
        };
        let n = first.n_turbines();
        let b = obs.len();
        let mut flat = Vec::with_capacity(b * flat_features(n));
        let mut nodes = Vec::with_capacity(b * n * NODE_FEATURES);
        let mut positional = Vec::with_capacity(b * n * POSITIONAL_FEATURES);
        let mut wind = Vec::with_capacity(b * WIND_FEATURES);
        let mut forecast = Vec::with_capacity(b * FORECAST_FEATURES);
        let mut orientations = Vec::with_capacity(b * n * TURBINE_FEATURES);
        let mut graphs = Vec::with_capacity(b);
        for o in obs {
            if o.n_turbines() != n || o.graph.n_nodes != n {
                return Err(Error::Contract(format!(
                    "observation has {} turbines and {} graph nodes, batch expects {n}",
                    o.n_turbines(),
                    o.graph.n_nodes
                )));
            }
            flat.extend(o.flat());
            wind.extend_from_slice(&o.wind);
            forecast.extend_from_slice(&o.forecast);
            for i in 0..n {
                nodes.extend_from_slice(&o.node_features(i));
                positional.extend_from_slice(&o.positional_features(i));
                orientations.extend_from_slice(&o.orientations[i]);
            }
            let feats: Vec<Vec<f64>> = o.graph.edge_features.iter().map(|f| f.to_vec()).collect();
            graphs.push(EdgeList::with_self_loops(n, &o.graph.edges, &feats, EDGE_FEATURES)?);
        }
        Ok(Self {
            batch: b,
            n_turbines: n,
            flat: Tensor::from_vec(b, flat_features(n), flat),
            nodes: Tensor::from_vec(b * n, NODE_FEATURES, nodes),
            positional: Tensor::from_vec(b * n, POSITIONAL_FEATURES, positional),
            wind: Tensor::from_vec(b, WIND_FEATURES, wind),
            forecast: Tensor::from_vec(b, FORECAST_FEATURES, forecast),
            orientations: Tensor::from_vec(b * n, TURBINE_FEATURES, orientations),
            edges: EdgeList::concat(&graphs),
            sample_of_node: (0..b * n).map(|r| r / n).collect(),
        })
    }
}

/// Graph nodes of the forward pass; `mu`, `kappa` are `B × N`, `value` is `B × 1`.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub mu: Var,
    pub kappa: Var,
    pub value: Var,
}

/// Plain per-sample outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticOutput {
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
struct V0Net {
    shared: [Linear; 2],
    actor: [Linear; 2],
    mu: Linear,
    kappa: Linear,
    critic: [Linear; 3],
}

#[derive(Debug, Clone)]
struct V1Net {
    shared: [GatLayer; 2],
    actor: [GatLayer; 2],
    mu: GatLayer,
    kappa: GatLayer,
    critic: [Linear; 3],
}

#[derive(Debug, Clone)]
struct V2Net {
    wind: [Linear; 2],
    forecast: [Linear; 2],
    positional: GatLayer,
    turbine: [Linear; 2],
    blocks: Vec<AttentionBlock>,
    final_norm: Option<LayerNorm>,
    mu: [Linear; 3],
    kappa: [Linear; 3],
    critic: [Linear; 3],
}

#[derive(Debug, Clone)]
enum Net {
    V0(V0Net),
    V1(V1Net),
    V2(V2Net),
}

/// Network structure; parameter values live in a separate [`ParamStore`] so
/// the same structure can run on current and frozen parameters.
#[derive(Debug, Clone)]
pub struct Architecture {
    config: ModelConfig,
    net: Net,
}

fn chain(layers: &[Linear], g: &mut Graph, store: &ParamStore, mut x: Var) -> Result<Var> {
    for l in layers {
        x = l.forward(g, store, x)?;
    }
    Ok(x)
}

fn mlp3(store: &mut ParamStore, name: &str, dims: [usize; 4], last: Activation, last_scale: f64, rng: &mut Rng) -> [Linear; 3] {
    [
        Linear::new(store, &format!("{name}.0"), dims[0], dims[1], Tanh, rng),
        Linear::new(store, &format!("{name}.1"), dims[1], dims[2], Tanh, rng),
        Linear::with_scale(store, &format!("{name}.2"), dims[2], dims[3], last, last_scale, rng),
    ]
}

fn embed(store: &mut ParamStore, name: &str, input: usize, d: usize, rng: &mut Rng) -> [Linear; 2] {
    [
        Linear::new(store, &format!("{name}.0"), input, d, Tanh, rng),
        Linear::new(store, &format!("{name}.1"), d, d, Lin, rng),
    ]
}

impl Architecture {
    /// Builds the structure and draws initial parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut rng = substream(seed, Purpose::Init, 0);
        let rng = &mut rng;
        let mut s = ParamStore::new();
        let store = &mut s;
        let w = config.widths();
        let n = config.n_turbines;
        let net = match config.variant {
            Variant::V0 => {
                let [s1, s2] = w.v0_shared;
                let [a1, a2] = w.v0_actor;
                let [c1, c2] = w.v0_critic;
                Net::V0(V0Net {
                    shared: [
                        Linear::new(store, "shared.0", flat_features(n), s1, Tanh, rng),
                        Linear::new(store, "shared.1", s1, s2, Tanh, rng),
                    ],
                    actor: [
                        Linear::new(store, "actor.0", s2, a1, Tanh, rng),
                        Linear::new(store, "actor.1", a1, a2, Tanh, rng),
                    ],
                    mu: Linear::with_scale(store, "mu", a2, n, TanhPi, HEAD_INIT_SCALE, rng),
                    kappa: Linear::new(store, "kappa", a2, n, SoftplusPlusOne, rng),
                    critic: mlp3(store, "critic", [s2, c1, c2, 1], Lin, 1.0, rng),
                })
            }
            Variant::V1 => {
                let h = w.v1_heads;
                let [a1, a2] = w.v1_actor;
                let [c1, c2] = w.critic;
                let shared = h * w.v1_shared;
                let gat = |s: &mut ParamStore, name: &str, i, heads, d, act, rng: &mut Rng| {
                    GatLayer::new(s, name, i, EDGE_FEATURES, heads, d, act, rng)
                };
                let shared_layers = [
                    gat(store, "shared.0", NODE_FEATURES, h, w.v1_shared, Tanh, rng),
                    gat(store, "shared.1", shared, h, w.v1_shared, Tanh, rng),
                ];
                let actor = [gat(store, "actor.0", shared, h, a1, Tanh, rng), gat(store, "actor.1", h * a1, h, a2, Tanh, rng)];
                let mu = gat(store, "mu", h * a2, 1, 1, TanhPi, rng);
                store.get_mut(mu.w_src).scale_assign(HEAD_INIT_SCALE);
                let kappa = gat(store, "kappa", h * a2, 1, 1, SoftplusPlusOne, rng);
                Net::V1(V1Net {
                    shared: shared_layers,
                    actor,
                    mu,
                    kappa,
                    critic: mlp3(store, "critic", [shared, c1, c2, 1], Lin, 1.0, rng),
                })
            }
            Variant::V2 => {
                let d = w.v2_dim;
                let [a1, a2] = w.v2_actor;
                let [c1, c2] = w.critic;
                Net::V2(V2Net {
                    wind: embed(store, "embed.wind", WIND_FEATURES, d, rng),
                    forecast: embed(store, "embed.forecast", FORECAST_FEATURES, d, rng),
                    positional: GatLayer::new(store, "embed.positional", POSITIONAL_FEATURES, EDGE_FEATURES, 1, d, Lin, rng),
                    turbine: embed(store, "embed.turbine", TURBINE_FEATURES, d, rng),
                    blocks: (0..w.v2_blocks)
                        .map(|i| {
                            AttentionBlock::new(
                                store,
                                &format!("block.{i}"),
                                d,
                                w.v2_heads,
                                w.v2_head_dim,
                                config.attention_norm,
                                config.attention_residual,
                                rng,
                            )
                        })
                        .collect(),
                    final_norm: config.attention_norm.then(|| LayerNorm::new(store, "final_norm", d)),
                    mu: mlp3(store, "mu", [d, a1, a2, 1], TanhPi, HEAD_INIT_SCALE, rng),
                    kappa: mlp3(store, "kappa", [d, a1, a2, 1], SoftplusPlusOne, 1.0, rng),
                    critic: mlp3(store, "critic", [d, c1, c2, 1], Lin, 1.0, rng),
                })
            }
        };
        Ok((Self { config, net }, s))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Records the forward pass of a batch into `g`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &ObsBatch) -> Result<ForwardVars> {
        let n = self.config.n_turbines;
        if batch.n_turbines != n {
            return Err(Error::Contract(format!("model built for {n} turbines, batch has {}", batch.n_turbines)));
        }
        let b = batch.batch;
        match &self.net {
            Net::V0(net) => {
                let x = g.input(batch.flat.clone());
                let h = chain(&net.shared, g, store, x)?;
                let a = chain(&net.actor, g, store, h)?;
                let mu = net.mu.forward(g, store, a)?;
                let kappa = net.kappa.forward(g, store, a)?;
                let value = chain(&net.critic, g, store, h)?;
                Ok(ForwardVars { mu, kappa, value })
            }
            Net::V1(net) => {
                let e = &batch.edges;
                let x = g.input(batch.nodes.clone());
                let mut h = x;
                for l in &net.shared {
                    h = l.forward(g, store, h, e)?;
                }
                let mut a = h;
                for l in &net.actor {
                    a = l.forward(g, store, a, e)?;
                }
                let mu = net.mu.forward(g, store, a, e)?;
                let kappa = net.kappa.forward(g, store, a, e)?;
                let pooled = self.pool(g, h, batch);
                let value = chain(&net.critic, g, store, pooled)?;
                Ok(ForwardVars { mu: g.reshape(mu, b, n), kappa: g.reshape(kappa, b, n), value })
            }
            Net::V2(net) => {
                let wind = g.input(batch.wind.clone());
                let ew = chain(&net.wind, g, store, wind)?;
                let forecast = g.input(batch.forecast.clone());
                let ef = chain(&net.forecast, g, store, forecast)?;
                let shared = g.add(ew, ef);
                let shared = g.gather_rows(shared, batch.sample_of_node.clone());
                let pos = g.input(batch.positional.clone());
                let epe = net.positional.forward(g, store, pos, &batch.edges)?;
                let ori = g.input(batch.orientations.clone());
                let ey = chain(&net.turbine, g, store, ori)?;
                let t = g.add(shared, epe);
                let mut tokens = g.add(t, ey);
                for blk in &net.blocks {
                    tokens = blk.forward(g, store, tokens, n)?;
                }
                if let Some(norm) = &net.final_norm {
                    tokens = norm.forward(g, store, tokens)?;
                }
                let mu = chain(&net.mu, g, store, tokens)?;
                let kappa = chain(&net.kappa, g, store, tokens)?;
                let pooled = self.pool(g, tokens, batch);
                let value = chain(&net.critic, g, store, pooled)?;
                Ok(ForwardVars { mu: g.reshape(mu, b, n), kappa: g.reshape(kappa, b, n), value })
            }
        }
    }

    fn pool(&self, g: &mut Graph, nodes: Var, batch: &ObsBatch) -> Var {
        let summed = g.scatter_add_rows(nodes, batch.sample_of_node.clone(), batch.batch);
        match self.config.pooling {
            Pooling::Sum => summed,
            Pooling::Mean => g.scale(summed, 1.0 / batch.n_turbines as f64),
        }
    }

    /// Forward pass without keeping the tape around.
    pub fn evaluate(&self, store: &ParamStore, obs: &[&Observation]) -> Result<Vec<ActorCriticOutput>> {
        let batch = ObsBatch::new(obs)?;
        let mut g = Graph::new();
        let v = self.forward(&mut g, store, &batch)?;
        let (mu, kappa, value) = (g.value(v.mu), g.value(v.kappa), g.value(v.value));
        Ok((0..batch.batch)
            .map(|r| ActorCriticOutput { mu: mu.row(r).to_vec(), kappa: kappa.row(r).to_vec(), value: value.get(r, 0) })
            .collect())
    }
}

/// Sampled farm action and its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Per-turbine action in radians.
    pub action: Vec<f64>,
    /// Joint log-density of `action`.
    pub logp: f64,
    pub value: f64,
}

impl Decision {
    /// Rotations in degrees for the environment.
    pub fn rotations_deg(&self) -> Vec<f64> {
        self.action.iter().map(|&a| action_denormalize(a)).collect()
    }
}

/// Joint log-density of independent per-turbine von Mises actions.
pub fn joint_logpdf(action: &[f64], out: &ActorCriticOutput) -> f64 {
    action.iter().zip(out.mu.iter().zip(&out.kappa)).map(|(&a, (&m, &k))| vonmises::logpdf_unchecked(a, m, k)).sum()
}

/// Samples (or, when `deterministic`, takes `μ`) for one output.
pub fn decide(out: &ActorCriticOutput, deterministic: bool, rng: &mut Rng) -> Decision {
    let action: Vec<f64> = if deterministic {
        out.mu.clone()
    } else {
        out.mu.iter().zip(&out.kappa).map(|(&m, &k)| vonmises::sample(m, k, rng)).collect()
    };
    let logp = joint_logpdf(&action, out);
    Decision { action, logp, value: out.value }
}

/// Structure plus parameter values.
#[derive(Debug, Clone)]
pub struct Policy {
    pub arch: Architecture,
    pub params: ParamStore,
}

impl Policy {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let (arch, params) = Architecture::new(config, seed)?;
        Ok(Self { arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    pub fn evaluate(&self, obs: &[&Observation]) -> Result<Vec<ActorCriticOutput>> {
        self.arch.evaluate(&self.params, obs)
    }

    pub fn act(&self, obs: &Observation, deterministic: bool, rng: &mut Rng) -> Result<Decision> {
        let out = self.evaluate(&[obs])?.pop().expect("one output per observation");
        Ok(decide(&out, deterministic, rng))
    }

    pub fn checkpoint(&self, extra: &[(&str, String)]) -> Checkpoint {
        let mut meta = self.config().meta();
        for (k, v) in extra {
            meta.insert((*k).to_owned(), v.clone());
        }
        Checkpoint::from_store(&self.params, meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint(&[]).save(path)
    }

    /// Rebuilds the architecture recorded in the checkpoint and loads its values.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_meta(&ck.meta)?;
        let (arch, mut params) = Architecture::new(config, 0)?;
        ck.load_into(&mut params)?;
        Ok(Self { arch, params })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
