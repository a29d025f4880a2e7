//! Fast oracle checks run by `wakesteer selftest`.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::baselines::{gauss_seidel_controller, standard_controller};
use crate::env::{normalize_observation, reward_total, EnvConfig, EnvState, WffcEnv};
use crate::error::Result;
use crate::geometry::{diamond_layout, row_layout};
use crate::nn::check::check_gradients;
use crate::nn::{Checkpoint, Graph};
use crate::policy::{Architecture, ModelConfig, ObsBatch, Policy, Scale, Variant};
use crate::ppo::compute_gae;
use crate::rng::{substream, Purpose};
use crate::vonmises;
use crate::wake::{compute_flow, TurbineModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> SelfCheck {
    match f() {
        Ok((passed, detail)) => SelfCheck { name, passed, detail },
        Err(e) => SelfCheck { name, passed: false, detail: e.to_string() },
    }
}

/// Composite Simpson rule over `[a, b]` with `n` (even) intervals.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn vonmises_quadrature() -> Result<(bool, String)> {
    let mut worst_h: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for kappa in [0.1, 1.0, 10.0, 100.0] {
        let f = |x: f64| vonmises::logpdf_unchecked(x, 0.3, kappa).exp();
        let mass = simpson(f, -PI + 0.3, PI + 0.3, 20_000);
        let h = -simpson(|x| f(x) * vonmises::logpdf_unchecked(x, 0.3, kappa), -PI + 0.3, PI + 0.3, 20_000);
        worst_h = worst_h.max((h - vonmises::entropy(kappa)?).abs());
        worst_mass = worst_mass.max((mass - 1.0).abs());
    }
    Ok((worst_h < 1e-6 && worst_mass < 1e-8, format!("entropy err {worst_h:.2e}, mass err {worst_mass:.2e}")))
}

fn gae_oracle() -> Result<(bool, String)> {
    let mut rng = substream(11, Purpose::Test, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let boot = rng.random_bool(0.5).then(|| rng.random_range(-2.0..2.0));
        let (gamma, lambda) = (rng.random::<f64>(), rng.random::<f64>());
        let (adv, _) = compute_gae(&r, &v, boot, gamma, lambda)?;
        for t in 0..n {
            let explicit: f64 = (t..n)
                .map(|j| {
                    let next = if j + 1 < n { v[j + 1] } else { 0.0 };
                    let rj = r[j] + if j + 1 == n { gamma * boot.unwrap_or(0.0) } else { 0.0 };
                    (gamma * lambda).powi((j - t) as i32) * (rj + gamma * next - v[j])
                })
                .sum();
            worst = worst.max((explicit - adv[t]).abs());
        }
    }
    Ok((worst < 1e-12, format!("max abs diff {worst:.2e}")))
}

fn reward_by_hand() -> Result<(bool, String)> {
    let mut rng = substream(12, Purpose::Test, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let yaws: Vec<f64> = (0..4).map(|_| rng.random_range(-40.0..40.0)).collect();
        let base = rng.random_range(1e6..5e7);
        let power = base * rng.random_range(0.8..1.2);
        let losses = rng.random_range(0.0..0.5);
        let got = reward_total(&yaws, power, base, losses, 1.0, 100.0, 3.0)?;
        let invalid: f64 = yaws.iter().filter(|a| a.abs() > 20.0).map(|a| (a.abs() / 180.0).powi(3)).sum::<f64>() / 4.0;
        let delta = (power - base) / base;
        let power_term = if delta < 0.0 { delta } else { (-3.0 * losses).exp() * delta };
        worst = worst.max((got - (-invalid + 100.0 * power_term)).abs());
    }
    Ok((worst < 1e-12, format!("max abs diff {worst:.2e}")))
}

fn gauss_seidel_dominance() -> Result<(bool, String)> {
    let layout = diamond_layout(4.0, 240.0)?;
    let model = TurbineModel::default();
    let mut ok = true;
    let mut best: f64 = 0.0;
    for k in (0..360).step_by(15) {
        let k = k as f64;
        let state = EnvState {
            t: 0,
            wind_obs: (k, 8.0),
            forecast: [(k, 8.0); 3],
            true_wind: (k, 8.0),
            orientations: vec![k; 19],
            yaws: vec![0.0; 19],
        };
        let gs = gauss_seidel_controller(&layout, &model, &state)?;
        let std = standard_controller(&state);
        let p_gs = compute_flow(&layout, &model, k, 8.0, &gs.intended_yaws)?.farm_power;
        let p_std = compute_flow(&layout, &model, k, 8.0, &std.intended_yaws)?.farm_power;
        ok &= p_gs >= p_std;
        best = best.max(p_gs / p_std - 1.0);
    }
    Ok((ok, format!("best gain {:.2}% over 24 directions", 100.0 * best)))
}

fn model_gradients() -> Result<(bool, String)> {
    let layout = row_layout(3, 5.0, 240.0)?;
    let cfg = EnvConfig::default();
    let env = WffcEnv::reset(layout.clone(), TurbineModel::default(), cfg, 4, (250.0, 290.0))?;
    let obs = normalize_observation(&layout, &cfg.wind, env.state());
    let batch = ObsBatch::new(&[&obs])?;
    let mut worst: f64 = 0.0;
    for v in [Variant::V0, Variant::V1, Variant::V2] {
        let (arch, store) = Architecture::new(ModelConfig::new(v, Scale::Desk, 3), 1)?;
        let run = |s: &_| -> Result<(Graph, crate::nn::Var)> {
            let mut g = Graph::new();
            let out = arch.forward(&mut g, s, &batch)?;
            let a = g.sum(out.mu);
            let b = g.sum(out.kappa);
            let ab = g.add(a, b);
            let l = g.add(ab, out.value);
            Ok((g, l))
        };
        let (g, l) = run(&store)?;
        let grads = g.backward(l, &store)?;
        let mut rng = substream(5, Purpose::Test, 0);
        let rep = check_gradients(&store, &grads, 1e-6, 2, &mut rng, |s| {
            let (g, l) = run(s)?;
            Ok(g.value(l).item())
        })?;
        worst = worst.max(rep.max_rel_error);
    }
    Ok((worst < 1e-4, format!("max rel error {worst:.2e}")))
}

fn checkpoint_roundtrip() -> Result<(bool, String)> {
    let policy = Policy::new(ModelConfig::new(Variant::V2, Scale::Desk, 3), 2)?;
    let mut bytes = Vec::new();
    policy.checkpoint(&[]).write_to(&mut bytes)?;
    let back = Policy::from_checkpoint(&Checkpoint::read_from(&mut bytes.as_slice())?)?;
    let same = back.params.fingerprint() == policy.params.fingerprint() && back.config() == policy.config();
    Ok((same, format!("{} bytes", bytes.len())))
}

/// Runs every check; takes a few seconds.
pub fn selftest() -> Vec<SelfCheck> {
    vec![
        check("von Mises entropy and mass by quadrature", vonmises_quadrature),
        check("GAE recursion equals explicit sum", gae_oracle),
        check("reward matches hand computation", reward_by_hand),
        check("Gauss-Seidel never below standard", gauss_seidel_dominance),
        check("desk models pass gradient checks", model_gradients),
        check("checkpoint roundtrip is exact", checkpoint_roundtrip),
    ]
}
