//! Proximal policy optimization with generalized advantage estimation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::env::{normalize_observation, EnvConfig, Observation, WffcEnv};
use crate::error::{Error, Result};
use crate::geometry::FarmLayout;
use crate::nn::{Adam, Graph, ParamStore, Tensor, Var};
use crate::policy::{decide, ActorCriticOutput, Architecture, ModelConfig, ObsBatch, Policy, Scale, Variant};
use crate::rng::{substream, training_episode_seed, Purpose};
use crate::vonmises;
use crate::wake::TurbineModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub training_steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr_first: f64,
    pub lr_last: f64,
    pub grad_clip: Option<f64>,
    pub entropy_coeff: f64,
    pub clip_actor: f64,
    pub vf_clip: f64,
    pub value_loss_coeff: f64,
    pub epochs: usize,
    pub train_batch: usize,
    pub minibatch: usize,
    pub episodes_per_iter: usize,
    pub normalize_advantages: bool,
    /// Save a checkpoint after every this many iterations (and after the last).
    pub checkpoint_every: usize,
}

impl PpoConfig {
    pub fn paper(variant: Variant) -> Self {
        let (lr_first, lr_last, grad_clip) = match variant {
            Variant::V0 => (1e-4, 1e-6, Some(10.0)),
            Variant::V1 | Variant::V2 => (1e-5, 1e-7, None),
        };
        Self {
            training_steps: 150,
            gamma: 0.1,
            gae_lambda: 0.95,
            lr_first,
            lr_last,
            grad_clip,
            entropy_coeff: 0.05,
            clip_actor: 0.01,
            vf_clip: 10.0,
            value_loss_coeff: 0.1,
            epochs: 11,
            train_batch: 6480,
            minibatch: 360,
            episodes_per_iter: 360,
            normalize_advantages: false,
            checkpoint_every: 10,
        }
    }

    /// Small profile for quick runs with 18-step episodes.
    pub fn desk(variant: Variant) -> Self {
        Self {
            training_steps: 30,
            lr_first: 1e-3,
            lr_last: 1e-4,
            clip_actor: 0.2,
            epochs: 8,
            train_batch: 16 * 18,
            minibatch: 48,
            episodes_per_iter: 16,
            normalize_advantages: true,
            checkpoint_every: 10,
            ..Self::paper(variant)
        }
    }

    pub fn for_scale(variant: Variant, scale: Scale) -> Self {
        match scale {
            Scale::Paper => Self::paper(variant),
            Scale::Desk => Self::desk(variant),
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.training_steps == 0 || self.epochs == 0 || self.episodes_per_iter == 0 || self.checkpoint_every == 0 {
            return bad("training_steps, epochs, episodes_per_iter and checkpoint_every must be positive".into());
        }
        if self.minibatch == 0 || self.train_batch % self.minibatch != 0 {
            return bad(format!("minibatch {} must divide train_batch {}", self.minibatch, self.train_batch));
        }
        if self.train_batch != self.episodes_per_iter * horizon {
            return bad(format!(
                "train_batch {} must equal episodes_per_iter {} × horizon {horizon}",
                self.train_batch, self.episodes_per_iter
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]".into());
        }
        let coeffs = [
            self.lr_first,
            self.lr_last,
            self.entropy_coeff,
            self.clip_actor,
            self.vf_clip,
            self.value_loss_coeff,
            self.grad_clip.unwrap_or(1.0),
        ];
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("learning rates, coefficients and clips must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Learning rate of iteration `it`, linear from `lr_first` to `lr_last`.
    pub fn lr_at(&self, it: usize) -> f64 {
        if self.training_steps <= 1 {
            return self.lr_first;
        }
        let f = it as f64 / (self.training_steps - 1) as f64;
        self.lr_first + (self.lr_last - self.lr_first) * f
    }

    pub fn updates_per_iteration(&self) -> usize {
        self.epochs * self.train_batch / self.minibatch
    }
}

/// Farm, turbine and environment shared by every episode of a run.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub layout: FarmLayout,
    pub turbine: TurbineModel,
    pub env: EnvConfig,
    /// Initial directions are spread over this window, degrees.
    pub k0_window: (f64, f64),
}

impl TrainSetup {
    /// Initial-direction interval of episode `e` out of `n`: equal bins over the window.
    pub fn k0_bin(&self, e: usize, n: usize) -> (f64, f64) {
        let (lo, hi) = self.k0_window;
        let w = (hi - lo) / n as f64;
        (lo + w * e as f64, lo + w * (e + 1) as f64)
    }

    pub fn make_env(&self, seed: u64, k0_range: (f64, f64)) -> Result<WffcEnv> {
        WffcEnv::reset(self.layout.clone(), self.turbine, self.env, seed, k0_range)
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub obs: Observation,
    /// Per-turbine action, radians.
    pub action: Vec<f64>,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub power_ratio: f64,
    /// Joint entropy of the action distribution.
    pub entropy: f64,
    pub energy_mwh: f64,
    pub baseline_energy_mwh: f64,
    pub wake_losses: f64,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub seed: u64,
    pub steps: Vec<Step>,
    /// `V(s_T)` of the state after the last step.
    pub bootstrap: f64,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn energy_mwh(&self) -> f64 {
        self.steps.iter().map(|s| s.energy_mwh).sum()
    }

    pub fn baseline_energy_mwh(&self) -> f64 {
        self.steps.iter().map(|s| s.baseline_energy_mwh).sum()
    }
}

fn batch_outputs(arch: &Architecture, params: &ParamStore, obs: &[Observation]) -> Result<Vec<ActorCriticOutput>> {
    let refs: Vec<&Observation> = obs.iter().collect();
    arch.evaluate(params, &refs)
}

/// Runs the given episodes to completion in lockstep, one batched forward
/// pass per time step.
fn run_lockstep(
    arch: &Architecture,
    params: &ParamStore,
    envs: Vec<(u64, WffcEnv)>,
    deterministic: bool,
) -> Result<Vec<Episode>> {
    let mut rngs: Vec<_> = envs.iter().map(|(seed, _)| substream(*seed, Purpose::ActionSampling, 0)).collect();
    let mut episodes: Vec<Episode> =
        envs.iter().map(|(seed, _)| Episode { seed: *seed, steps: Vec::new(), bootstrap: 0.0 }).collect();
    let mut envs: Vec<WffcEnv> = envs.into_iter().map(|(_, e)| e).collect();
    let observe = |envs: &[WffcEnv]| -> Vec<Observation> {
        envs.iter().map(|e| normalize_observation(e.layout(), &e.config().wind, e.state())).collect()
    };
    while !envs.is_empty() && !envs[0].is_done() {
        let obs = observe(&envs);
        let outs = batch_outputs(arch, params, &obs)?;
        for (((env, out), o), (ep, rng)) in envs.iter_mut().zip(&outs).zip(obs).zip(episodes.iter_mut().zip(&mut rngs)) {
            let d = decide(out, deterministic, rng);
            let result = env.step(&d.rotations_deg())?;
            ep.steps.push(Step {
                obs: o,
                entropy: out.kappa.iter().map(|&k| vonmises::entropy_unchecked(k)).sum(),
                action: d.action,
                logp: d.logp,
                value: d.value,
                reward: result.reward,
                power_ratio: result.power_ratio,
                energy_mwh: result.energy_mwh,
                baseline_energy_mwh: result.baseline_energy_mwh,
                wake_losses: result.wake_losses,
            });
        }
    }
    if !envs.is_empty() {
        let finals = batch_outputs(arch, params, &observe(&envs))?;
        for (ep, out) in episodes.iter_mut().zip(finals) {
            ep.bootstrap = out.value;
        }
    }
    Ok(episodes)
}

/// Runs episodes, splitting them across worker threads when the `parallel`
/// feature is on. Results come back in input order whatever the split.
pub fn run_episodes(
    arch: &Architecture,
    params: &ParamStore,
    envs: Vec<(u64, WffcEnv)>,
    deterministic: bool,
) -> Result<Vec<Episode>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let workers = rayon::current_num_threads().max(1);
        if workers > 1 && envs.len() > 1 {
            let chunk = envs.len().div_ceil(workers);
            let mut groups: Vec<Vec<(u64, WffcEnv)>> = Vec::new();
            let mut it = envs.into_iter().peekable();
            while it.peek().is_some() {
                groups.push(it.by_ref().take(chunk).collect());
            }
            let parts: Vec<Result<Vec<Episode>>> =
                groups.into_par_iter().map(|g| run_lockstep(arch, params, g, deterministic)).collect();
            let mut out = Vec::new();
            for p in parts {
                out.extend(p?);
            }
            return Ok(out);
        }
    }
    run_lockstep(arch, params, envs, deterministic)
}

/// Samples `episodes_per_iter` training episodes for iteration `iteration`.
pub fn collect_rollouts(
    arch: &Architecture,
    params: &ParamStore,
    setup: &TrainSetup,
    cfg: &PpoConfig,
    run_seed: u64,
    iteration: usize,
) -> Result<Vec<Episode>> {
    let n = cfg.episodes_per_iter;
    let envs = (0..n)
        .map(|e| {
            let seed = training_episode_seed(run_seed, iteration as u64, e as u64);
            Ok((seed, setup.make_env(seed, setup.k0_bin(e, n))?))
        })
        .collect::<Result<Vec<_>>>()?;
    run_episodes(arch, params, envs, false)
}

/// Advantages and value targets of one episode.
///
/// When the episode was truncated, `bootstrap = Some(V(s_T))` is folded
/// into the last reward as `r ← r + γ·V(s_T)` and the value after the end
/// is taken as zero.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: Option<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::Contract(format!("{} rewards but {} values", rewards.len(), values.len())));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let mut r = rewards[t];
        let next = if t + 1 < n {
            values[t + 1]
        } else {
            r += gamma * bootstrap.unwrap_or(0.0);
            0.0
        };
        let delta = r + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// One training sample.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub obs: &'a Observation,
    pub action: &'a [f64],
    pub logp_old: f64,
    pub advantage: f64,
    pub target: f64,
}

pub fn samples<'a>(episodes: &'a [Episode], cfg: &PpoConfig) -> Result<Vec<Sample<'a>>> {
    let mut out = Vec::new();
    for ep in episodes {
        let rewards: Vec<f64> = ep.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = ep.steps.iter().map(|s| s.value).collect();
        let (adv, targets) = compute_gae(&rewards, &values, Some(ep.bootstrap), cfg.gamma, cfg.gae_lambda)?;
        for ((s, a), t) in ep.steps.iter().zip(adv).zip(targets) {
            out.push(Sample { obs: &s.obs, action: &s.action, logp_old: s.logp, advantage: a, target: t });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub actor: Var,
    pub critic: Var,
    pub entropy: Var,
    pub total: Var,
}

/// Records the clipped PPO objective of a minibatch into `g`.
pub fn ppo_losses(
    g: &mut Graph,
    arch: &Architecture,
    params: &ParamStore,
    minibatch: &[Sample<'_>],
    cfg: &PpoConfig,
) -> Result<LossVars> {
    let obs: Vec<&Observation> = minibatch.iter().map(|s| s.obs).collect();
    let batch = ObsBatch::new(&obs)?;
    let out = arch.forward(g, params, &batch)?;
    let m = minibatch.len();
    let n = batch.n_turbines;
    let actions = Tensor::from_vec(m, n, minibatch.iter().flat_map(|s| s.action.iter().copied()).collect());
    let mut adv: Vec<f64> = minibatch.iter().map(|s| s.advantage).collect();
    if cfg.normalize_advantages && m > 1 {
        let mean = adv.iter().sum::<f64>() / m as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
        for a in &mut adv {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
    let lp = g.vonmises_logpdf(Rc::new(actions), out.mu, out.kappa);
    let logp = g.sum_cols(lp);
    let old = g.input(Tensor::from_vec(m, 1, minibatch.iter().map(|s| s.logp_old).collect()));
    let diff = g.sub(logp, old);
    let ratio = g.exp(diff);
    let adv = g.input(Tensor::from_vec(m, 1, adv));
    let surr1 = g.mul(ratio, adv);
    let clipped = g.clamp(ratio, 1.0 - cfg.clip_actor, 1.0 + cfg.clip_actor);
    let surr2 = g.mul(clipped, adv);
    let surr = g.min(surr1, surr2);
    let mean_surr = g.mean(surr);
    let actor = g.scale(mean_surr, -1.0);

    let targets = g.input(Tensor::from_vec(m, 1, minibatch.iter().map(|s| s.target).collect()));
    let err = g.sub(out.value, targets);
    let sq = g.square(err);
    let sq = g.clamp(sq, 0.0, cfg.vf_clip);
    let critic = g.mean(sq);

    let ent = g.vonmises_entropy(out.kappa);
    let ent = g.sum_cols(ent);
    let mean_ent = g.mean(ent);
    let entropy = g.scale(mean_ent, -1.0);

    let c = g.scale(critic, cfg.value_loss_coeff);
    let e = g.scale(entropy, cfg.entropy_coeff);
    let total = g.add(actor, c);
    let total = g.add(total, e);
    Ok(LossVars { actor, critic, entropy, total })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterMetrics {
    pub iter: usize,
    pub mean_reward: f64,
    pub mean_power_ratio: f64,
    pub mean_entropy: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "iter,mean_reward,mean_power_ratio,mean_entropy,lr,wall_seconds";

impl IterMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.iter, self.mean_reward, self.mean_power_ratio, self.mean_entropy, self.lr, self.wall_seconds
        )
    }
}

pub fn checkpoint_name(variant: Variant, seed: u64, iter: usize) -> String {
    format!("{variant}_{seed}_{iter}.ckpt")
}

pub fn metrics_name(variant: Variant, seed: u64) -> String {
    format!("metrics_{variant}_{seed}.csv")
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub metrics: Vec<IterMetrics>,
    pub checkpoints: Vec<PathBuf>,
}

/// Where a run writes its metrics and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

struct Sink {
    dir: Option<PathBuf>,
    metrics: Option<BufWriter<File>>,
    checkpoints: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: Option<&Path>, variant: Variant, seed: u64) -> Result<Self> {
        let metrics = match dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| Error::Io(format!("{}: {e}", d.display())))?;
                let path = d.join(metrics_name(variant, seed));
                let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
                writeln!(w, "{METRICS_HEADER}")?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { dir: dir.map(Path::to_path_buf), metrics, checkpoints: Vec::new() })
    }

    fn metrics(&mut self, m: &IterMetrics) -> Result<()> {
        if let Some(w) = &mut self.metrics {
            writeln!(w, "{}", m.csv_row())?;
            w.flush()?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, policy: &Policy, seed: u64, iter: usize) -> Result<Option<PathBuf>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(checkpoint_name(policy.config().variant, seed, iter));
        policy.checkpoint(&[("seed", seed.to_string()), ("iteration", iter.to_string())]).save(&path)?;
        self.checkpoints.push(path.clone());
        Ok(Some(path))
    }
}

/// Runs the full training loop.
///
/// `hook` sees every iteration's metrics and the updated policy; returning
/// an error stops training. On a non-finite loss the pre-update parameters
/// are saved as a checkpoint and a [`Error::Numerical`] is returned.
pub fn train(
    setup: &TrainSetup,
    model: ModelConfig,
    cfg: &PpoConfig,
    seed: u64,
    out: &TrainOutput,
    mut hook: impl FnMut(&IterMetrics, &Policy) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate(setup.env.horizon)?;
    if model.n_turbines != setup.layout.n_turbines() {
        return Err(Error::Config(format!(
            "model built for {} turbines, layout has {}",
            model.n_turbines,
            setup.layout.n_turbines()
        )));
    }
    let variant = model.variant;
    let mut policy = Policy::new(model, seed)?;
    let mut adam = Adam::new(&policy.params);
    let mut sink = Sink::new(out.dir.as_deref(), variant, seed)?;
    let mut metrics = Vec::with_capacity(cfg.training_steps);
    let start = Instant::now();
    for it in 0..cfg.training_steps {
        let lr = cfg.lr_at(it);
        let frozen = policy.params.clone();
        let frozen_hash = frozen.fingerprint();
        let episodes = collect_rollouts(&policy.arch, &frozen, setup, cfg, seed, it)?;
        let data = samples(&episodes, cfg)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut substream(seed, Purpose::Minibatch, (it * cfg.epochs + epoch) as u64));
            for chunk in order.chunks(cfg.minibatch) {
                let mb: Vec<Sample<'_>> = chunk.iter().map(|&i| data[i].clone()).collect();
                let mut g = Graph::new();
                let losses = ppo_losses(&mut g, &policy.arch, &policy.params, &mb, cfg)?;
                let total = g.value(losses.total).item();
                let mut grads = g.backward(losses.total, &policy.params)?;
                if !total.is_finite() || !grads.is_finite() {
                    let saved = sink.checkpoint(&Policy { arch: policy.arch.clone(), params: frozen }, seed, it)?;
                    return Err(Error::Numerical(format!(
                        "non-finite loss in iteration {it} (actor {}, critic {}, entropy {}); last good checkpoint: {}",
                        g.value(losses.actor).item(),
                        g.value(losses.critic).item(),
                        g.value(losses.entropy).item(),
                        saved.map_or("not saved".into(), |p| p.display().to_string())
                    )));
                }
                if let Some(c) = cfg.grad_clip {
                    grads.clip_global_norm(c);
                }
                adam.step(&mut policy.params, &grads, lr);
            }
        }
        assert_eq!(frozen.fingerprint(), frozen_hash, "rollout parameters changed during the update");
        let n_steps = data.len() as f64;
        let all_steps = episodes.iter().flat_map(|e| &e.steps);
        let m = IterMetrics {
            iter: it,
            mean_reward: episodes.iter().map(Episode::total_reward).sum::<f64>() / episodes.len() as f64,
            mean_power_ratio: all_steps.clone().map(|s| s.power_ratio).sum::<f64>() / n_steps,
            mean_entropy: all_steps.map(|s| s.entropy).sum::<f64>() / n_steps,
            lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        sink.metrics(&m)?;
        let done = it + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.training_steps {
            sink.checkpoint(&policy, seed, done)?;
        }
        hook(&m, &policy)?;
        metrics.push(m);
    }
    Ok(TrainOutcome { policy, metrics, checkpoints: sink.checkpoints })
}
