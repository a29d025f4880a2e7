use proptest::prelude::*;

use wakesteer::env::EnvConfig;
use wakesteer::geometry::row_layout;
use wakesteer::nn::Graph;
use wakesteer::policy::{ModelConfig, Policy, Scale, Variant};
use wakesteer::ppo::{
    checkpoint_name, collect_rollouts, compute_gae, metrics_name, ppo_losses, samples, train, PpoConfig, Sample,
    TrainOutput, TrainSetup, METRICS_HEADER,
};
use wakesteer::wake::TurbineModel;
use wakesteer::Error;

fn setup() -> TrainSetup {
    TrainSetup {
        layout: row_layout(3, 5.0, 240.0).unwrap(),
        turbine: TurbineModel::default(),
        env: EnvConfig::default(),
        k0_window: (260.0, 280.0),
    }
}

fn small(variant: Variant) -> PpoConfig {
    PpoConfig {
        training_steps: 2,
        episodes_per_iter: 4,
        train_batch: 72,
        minibatch: 24,
        epochs: 2,
        normalize_advantages: false,
        ..PpoConfig::desk(variant)
    }
}

fn explicit_gae(r: &[f64], v: &[f64], boot: Option<f64>, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let delta = |j: usize| {
        let last = j + 1 == n;
        let rj = r[j] + if last { gamma * boot.unwrap_or(0.0) } else { 0.0 };
        let next = if last { 0.0 } else { v[j + 1] };
        rj + gamma * next - v[j]
    };
    (0..n).map(|t| (t..n).map(|j| (gamma * lambda).powi((j - t) as i32) * delta(j)).sum()).collect()
}

#[test]
fn gae_one_step_with_truncation_bootstrap() {
    let (adv, target) = compute_gae(&[2.0], &[1.0], Some(3.0), 0.1, 0.95).unwrap();
    assert!((adv[0] - 1.3).abs() < 1e-15);
    assert!((target[0] - 2.3).abs() < 1e-15);
}

#[test]
fn gae_with_zero_lambda_is_the_td_residual() {
    let r = [0.5, -1.0, 2.0];
    let v = [0.1, 0.7, -0.3];
    let (adv, _) = compute_gae(&r, &v, Some(0.4), 0.9, 0.0).unwrap();
    let td = [0.5 + 0.9 * 0.7 - 0.1, -1.0 + 0.9 * -0.3 - 0.7, 2.0 + 0.9 * 0.4 + 0.3];
    for (a, d) in adv.iter().zip(td) {
        assert!((a - d).abs() < 1e-15);
    }
}

#[test]
fn gae_rejects_misaligned_inputs() {
    assert!(matches!(compute_gae(&[1.0, 2.0], &[0.0], None, 0.1, 0.95), Err(Error::Contract(_))));
}

proptest! {
    #[test]
    fn gae_matches_explicit_weighted_sum(
        rv in (1usize..=10).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )),
        boot in prop::option::of(-5.0f64..5.0),
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let (r, v) = rv;
        let (adv, targets) = compute_gae(&r, &v, boot, gamma, lambda).unwrap();
        let oracle = explicit_gae(&r, &v, boot, gamma, lambda);
        for t in 0..r.len() {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-12);
            prop_assert!((targets[t] - (oracle[t] + v[t])).abs() < 1e-12);
        }
    }
}

#[test]
fn learning_rate_interpolates_linearly() {
    let cfg = PpoConfig::paper(Variant::V2);
    assert_eq!(cfg.lr_at(0), cfg.lr_first);
    assert!((cfg.lr_at(cfg.training_steps - 1) - cfg.lr_last).abs() < 1e-20);
    let three = PpoConfig { training_steps: 3, ..cfg };
    assert!((three.lr_at(1) - 0.5 * (three.lr_first + three.lr_last)).abs() < 1e-20);
}

#[test]
fn paper_profile_batch_arithmetic() {
    let cfg = PpoConfig::paper(Variant::V1);
    cfg.validate(18).unwrap();
    assert_eq!(cfg.episodes_per_iter * 18, 6480);
    assert_eq!(cfg.updates_per_iteration(), 198);
    assert_eq!(cfg.training_steps * cfg.train_batch, 972_000);
    assert_eq!(PpoConfig::paper(Variant::V0).grad_clip, Some(10.0));
    assert_eq!(PpoConfig::paper(Variant::V2).grad_clip, None);
}

#[test]
fn config_validation_rejects_inconsistent_batches() {
    let mut cfg = PpoConfig::paper(Variant::V2);
    cfg.minibatch = 7;
    assert!(matches!(cfg.validate(18), Err(Error::Config(_))));
    let cfg = PpoConfig::paper(Variant::V2);
    assert!(matches!(cfg.validate(17), Err(Error::Config(_))));
}

#[test]
fn episode_direction_bins() {
    let mut s = setup();
    s.k0_window = (0.0, 360.0);
    assert_eq!(s.k0_bin(0, 16), (0.0, 22.5));
    assert_eq!(s.k0_bin(15, 16), (337.5, 360.0));
    assert_eq!(s.k0_bin(7, 360), (7.0, 8.0));
}

fn rollout_samples(policy: &Policy, cfg: &PpoConfig) -> Vec<wakesteer::ppo::Episode> {
    collect_rollouts(&policy.arch, &policy.params, &setup(), cfg, 3, 0).unwrap()
}

#[test]
fn rollouts_are_reproducible_and_seeded_by_iteration() {
    let cfg = small(Variant::V2);
    let policy = Policy::new(ModelConfig::new(Variant::V2, Scale::Desk, 3), 0).unwrap();
    let a = rollout_samples(&policy, &cfg);
    let b = rollout_samples(&policy, &cfg);
    let c = collect_rollouts(&policy.arch, &policy.params, &setup(), &cfg, 3, 1).unwrap();
    assert_eq!(a.len(), 4);
    assert!(a.iter().all(|e| e.steps.len() == 18 && e.seed % 2 == 0));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.seed, y.seed);
        for (s, t) in x.steps.iter().zip(&y.steps) {
            assert_eq!(s.action, t.action);
            assert_eq!(s.reward, t.reward);
        }
    }
    assert_ne!(a[0].seed, c[0].seed);
    assert_eq!(samples(&a, &cfg).unwrap().len(), cfg.train_batch);
}

#[test]
fn losses_at_rollout_parameters() {
    let cfg = small(Variant::V1);
    let policy = Policy::new(ModelConfig::new(Variant::V1, Scale::Desk, 3), 1).unwrap();
    let episodes = rollout_samples(&policy, &cfg);
    let data = samples(&episodes, &cfg).unwrap();
    let mb = &data[..24];

    // ratio identity
    let mut g = Graph::new();
    let l = ppo_losses(&mut g, &policy.arch, &policy.params, mb, &cfg).unwrap();
    let mean_adv = mb.iter().map(|s| s.advantage).sum::<f64>() / mb.len() as f64;
    assert!((g.value(l.actor).item() + mean_adv).abs() < 1e-12);

    // zero advantages: no actor gradient
    let zero: Vec<Sample<'_>> = mb.iter().map(|s| Sample { advantage: 0.0, ..s.clone() }).collect();
    let mut g = Graph::new();
    let l = ppo_losses(&mut g, &policy.arch, &policy.params, &zero, &cfg).unwrap();
    assert!(g.backward(l.actor, &policy.params).unwrap().is_zero());

    // positive advantage with the ratio at 1 + 2ε sits on the clipped branch
    let eps = cfg.clip_actor;
    let pushed: Vec<Sample<'_>> = mb
        .iter()
        .map(|s| Sample { advantage: 1.0, logp_old: s.logp_old - (1.0 + 2.0 * eps).ln(), ..s.clone() })
        .collect();
    let mut g = Graph::new();
    let l = ppo_losses(&mut g, &policy.arch, &policy.params, &pushed, &cfg).unwrap();
    assert!((g.value(l.actor).item() + (1.0 + eps)).abs() < 1e-12);
    assert!(g.backward(l.actor, &policy.params).unwrap().is_zero());
}

#[test]
fn critic_error_is_capped_at_vf_clip() {
    let cfg = small(Variant::V2);
    let policy = Policy::new(ModelConfig::new(Variant::V2, Scale::Desk, 3), 2).unwrap();
    let episodes = rollout_samples(&policy, &cfg);
    let data = samples(&episodes, &cfg).unwrap();
    let one = Sample { target: episodes[0].steps[0].value + 5.0, ..data[0].clone() };
    let mut g = Graph::new();
    let l = ppo_losses(&mut g, &policy.arch, &policy.params, &[one], &cfg).unwrap();
    assert_eq!(cfg.vf_clip, 10.0);
    assert!((g.value(l.critic).item() - 10.0).abs() < 1e-12);
    assert!(g.backward(l.critic, &policy.params).unwrap().is_zero());
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let cfg = PpoConfig { lr_first: 0.0, lr_last: 0.0, training_steps: 1, ..small(Variant::V0) };
    let model = ModelConfig::new(Variant::V0, Scale::Desk, 3);
    let start = Policy::new(model.clone(), 4).unwrap();
    let out = train(&setup(), model, &cfg, 4, &TrainOutput::default(), |_, _| Ok(())).unwrap();
    assert_eq!(out.policy.params.fingerprint(), start.params.fingerprint());
}

#[test]
fn training_writes_metrics_and_checkpoints_reproducibly() {
    let cfg = PpoConfig { checkpoint_every: 1, ..small(Variant::V2) };
    let model = ModelConfig::new(Variant::V2, Scale::Desk, 3);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let runs: Vec<_> = dirs
        .iter()
        .map(|d| {
            let out = TrainOutput { dir: Some(d.path().to_path_buf()) };
            train(&setup(), model.clone(), &cfg, 6, &out, |_, _| Ok(())).unwrap()
        })
        .collect();
    assert_eq!(runs[0].metrics.len(), 2);
    for (a, b) in runs[0].metrics.iter().zip(&runs[1].metrics) {
        assert_eq!((a.iter, a.mean_reward, a.mean_power_ratio, a.mean_entropy, a.lr), (b.iter, b.mean_reward, b.mean_power_ratio, b.mean_entropy, b.lr));
    }
    for it in [1, 2] {
        let name = checkpoint_name(Variant::V2, 6, it);
        assert_eq!(name, format!("v2_6_{it}.ckpt"));
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b);
    }
    let metrics = std::fs::read_to_string(dirs[0].path().join(metrics_name(Variant::V2, 6))).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,"));
    let last = Policy::load(&dirs[0].path().join(checkpoint_name(Variant::V2, 6, 2))).unwrap();
    assert_eq!(last.params.fingerprint(), runs[0].policy.params.fingerprint());
}

#[test]
fn training_rejects_mismatched_model() {
    let cfg = small(Variant::V2);
    let err = train(&setup(), ModelConfig::new(Variant::V2, Scale::Desk, 4), &cfg, 0, &TrainOutput::default(), |_, _| Ok(()));
    assert!(matches!(err, Err(Error::Config(_))));
}
