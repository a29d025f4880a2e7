//! The wake-steering MDP: episode lifecycle, transition and reward.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{build_wake_graph, modulo_360, wrap_unchecked, FarmLayout, WakeGraph};
use crate::rng::{substream, Purpose};
use crate::wake::{compute_flow, ideal_power, TurbineModel, MAX_OPERATING_YAW_DEG};
use crate::wind::{add_noise, generate_series, WindParams, WindSeries, FORECAST_HORIZON};

/// Largest rotation a yaw actuator can make within one step, degrees.
pub const MAX_ROTATION_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub horizon: usize,
    pub step_minutes: f64,
    /// Weight of the invalid-yaw penalty.
    pub w0: f64,
    /// Weight of the power term.
    pub w1: f64,
    /// Wake-loss damping exponent of the power term.
    pub p: f64,
    pub wind: WindParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { horizon: 18, step_minutes: 10.0, w0: 1.0, w1: 100.0, p: 3.0, wind: WindParams::default() }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.wind.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if ![self.step_minutes, self.w0, self.w1, self.p].iter().all(|v| v.is_finite()) || self.step_minutes <= 0.0 {
            return Err(Error::Config("env weights must be finite and step_minutes positive".into()));
        }
        Ok(())
    }
}

/// Everything the policy may observe, plus the hidden true wind and yaws.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    /// Measured `(K', V')`.
    pub wind_obs: (f64, f64),
    /// Forecast `(K', V')` for the next three steps.
    pub forecast: [(f64, f64); FORECAST_HORIZON],
    /// Absolute nacelle orientations β, degrees in `[0, 360)`.
    pub orientations: Vec<f64>,
    /// True `(K, V)`.
    pub true_wind: (f64, f64),
    /// Yaw offsets α = wrap(K − β).
    pub yaws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// W.
    pub farm_power: f64,
    /// Power of the perfect-tracking reference, W.
    pub baseline_power: f64,
    pub wake_losses: f64,
    pub power_ratio: f64,
    /// Yaw offsets right after the rotation, degrees.
    pub applied_yaws: Vec<f64>,
    /// Energy produced over the step, MWh.
    pub energy_mwh: f64,
    /// Energy the perfect-tracking reference would have produced, MWh.
    pub baseline_energy_mwh: f64,
    pub done: bool,
}

/// Penalty for yaw offsets outside the operating range.
pub fn reward_invalid(applied_yaws: &[f64]) -> f64 {
    let n = applied_yaws.len() as f64;
    let total: f64 = applied_yaws
        .iter()
        .filter(|a| a.abs() > MAX_OPERATING_YAW_DEG)
        .map(|a| (a.abs() / 180.0).powi(3))
        .sum();
    -total / n
}

/// Power-ratio term, damped by the reference wake losses when positive.
pub fn reward_power(delta: f64, wake_losses: f64, p: f64) -> f64 {
    if delta < 0.0 {
        delta
    } else {
        (-p * wake_losses).exp() * delta
    }
}

pub fn reward_total(
    applied_yaws: &[f64],
    farm_power: f64,
    baseline_power: f64,
    wake_losses: f64,
    w0: f64,
    w1: f64,
    p: f64,
) -> Result<f64> {
    if !(baseline_power > 0.0) {
        return Err(Error::Domain(format!("baseline power must be positive, got {baseline_power}")));
    }
    let delta = (farm_power - baseline_power) / baseline_power;
    Ok(w0 * reward_invalid(applied_yaws) + w1 * reward_power(delta, wake_losses, p))
}

/// Farm power with every turbine facing the true wind.
pub fn baseline_power(layout: &FarmLayout, model: &TurbineModel, k: f64, v: f64) -> Result<f64> {
    Ok(compute_flow(layout, model, k, v, &vec![0.0; layout.n_turbines()])?.farm_power)
}

/// Fraction of wake-free power lost by the perfect-tracking reference.
pub fn wake_losses(layout: &FarmLayout, model: &TurbineModel, k: f64, v: f64) -> Result<f64> {
    let ideal = ideal_power(layout, model, v)?;
    if !(ideal > 0.0) {
        return Err(Error::Domain(format!("wake losses undefined at {v} m/s: no wake-free power")));
    }
    Ok(1.0 - baseline_power(layout, model, k, v)? / ideal)
}

/// One farm under one wind series. Owned by a single rollout worker.
#[derive(Debug, Clone)]
pub struct WffcEnv {
    layout: FarmLayout,
    turbine: TurbineModel,
    config: EnvConfig,
    series: WindSeries,
    state: EnvState,
}

impl WffcEnv {
    /// Starts an episode. `k0_range` is the half-open interval of initial
    /// wind directions, degrees; it may extend past 360.
    pub fn reset(
        layout: FarmLayout,
        turbine: TurbineModel,
        config: EnvConfig,
        episode_seed: u64,
        k0_range: (f64, f64),
    ) -> Result<Self> {
        config.validate()?;
        let (lo, hi) = k0_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid initial direction range [{lo}, {hi})")));
        }
        let mut rng = substream(episode_seed, Purpose::EpisodeReset, 0);
        let w = config.wind;
        let k0 = modulo_360(lo + (hi - lo) * rng.random::<f64>());
        let v0 = w.v_min + (w.v_max - w.v_min) * rng.random::<f64>();
        let orientations: Vec<f64> = (0..layout.n_turbines())
            .map(|_| {
                let alpha0 = -MAX_OPERATING_YAW_DEG + 2.0 * MAX_OPERATING_YAW_DEG * rng.random::<f64>();
                modulo_360(k0 - alpha0)
            })
            .collect();
        let mut series = generate_series(&mut substream(episode_seed, Purpose::WindProcess, 0), config.horizon, k0, v0, &w)?;
        add_noise(&mut series, &mut substream(episode_seed, Purpose::WindNoise, 0), &w);
        let state = Self::assemble(&series, 0, orientations);
        Ok(Self { layout, turbine, config, series, state })
    }

    /// Builds the state at time `t`. Past the episode end the forecast
    /// repeats the last available entry of the series.
    fn assemble(series: &WindSeries, t: usize, orientations: Vec<f64>) -> EnvState {
        let last = series.len() - 1;
        let forecast = std::array::from_fn(|l| {
            let i = (t + 1 + l).min(last);
            (series.direction_noisy[i], series.speed_noisy[i])
        });
        let k = series.direction[t];
        EnvState {
            t,
            wind_obs: (series.direction_noisy[t], series.speed_noisy[t]),
            forecast,
            true_wind: (k, series.speed[t]),
            yaws: orientations.iter().map(|&b| wrap_unchecked(k - b)).collect(),
            orientations,
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn layout(&self) -> &FarmLayout {
        &self.layout
    }

    pub fn turbine(&self) -> &TurbineModel {
        &self.turbine
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn series(&self) -> &WindSeries {
        &self.series
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.config.horizon
    }

    /// Applies per-turbine rotations `actions` (degrees, within ±20).
    pub fn step(&mut self, actions: &[f64]) -> Result<StepOutcome> {
        let n = self.layout.n_turbines();
        if self.is_done() {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if actions.len() != n {
            return Err(Error::Contract(format!("{} actions for {n} turbines", actions.len())));
        }
        if let Some(a) = actions.iter().find(|a| !(a.abs() <= MAX_ROTATION_DEG)) {
            return Err(Error::Contract(format!("action {a} outside [-{MAX_ROTATION_DEG}, {MAX_ROTATION_DEG}]")));
        }
        let t = self.state.t;
        let (k, v) = self.state.true_wind;
        let orientations: Vec<f64> = self.state.orientations.iter().zip(actions).map(|(b, a)| modulo_360(b + a)).collect();
        let applied_yaws: Vec<f64> = orientations.iter().map(|&b| wrap_unchecked(k - b)).collect();
        let farm_power = compute_flow(&self.layout, &self.turbine, k, v, &applied_yaws)?.farm_power;
        let reference = baseline_power(&self.layout, &self.turbine, k, v)?;
        let losses = wake_losses(&self.layout, &self.turbine, k, v)?;
        let c = &self.config;
        let reward = reward_total(&applied_yaws, farm_power, reference, losses, c.w0, c.w1, c.p)?;
        let hours = c.step_minutes / 60.0;
        let outcome = StepOutcome {
            reward,
            farm_power,
            baseline_power: reference,
            wake_losses: losses,
            power_ratio: (farm_power - reference) / reference,
            applied_yaws,
            energy_mwh: farm_power * hours / 1e6,
            baseline_energy_mwh: reference * hours / 1e6,
            done: t + 1 == c.horizon,
        };
        self.state = Self::assemble(&self.series, t + 1, orientations);
        Ok(outcome)
    }
}

pub const WIND_FEATURES: usize = 3;
pub const FORECAST_FEATURES: usize = 3 * FORECAST_HORIZON;
pub const TURBINE_FEATURES: usize = 2;
/// Per-node features of the full turbine graph: wind, forecast, orientation.
pub const NODE_FEATURES: usize = WIND_FEATURES + FORECAST_FEATURES + TURBINE_FEATURES;
/// Per-node features of the positional graph: wind direction and orientation.
pub const POSITIONAL_FEATURES: usize = 4;

pub fn flat_features(n_turbines: usize) -> usize {
    WIND_FEATURES + FORECAST_FEATURES + TURBINE_FEATURES * n_turbines
}

/// Normalized views of a state. Speeds map to `[-1, 1]`, angles to `(sin, cos)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub wind: [f64; WIND_FEATURES],
    pub forecast: [f64; FORECAST_FEATURES],
    /// `(sin β, cos β)` per turbine.
    pub orientations: Vec<[f64; TURBINE_FEATURES]>,
    /// Wake graph for the measured wind direction.
    pub graph: WakeGraph,
}

fn sin_cos_deg(x: f64) -> (f64, f64) {
    x.to_radians().sin_cos()
}

impl Observation {
    pub fn n_turbines(&self) -> usize {
        self.orientations.len()
    }

    /// Concatenated vector: wind, forecast, then every orientation.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(flat_features(self.n_turbines()));
        v.extend_from_slice(&self.wind);
        v.extend_from_slice(&self.forecast);
        for o in &self.orientations {
            v.extend_from_slice(o);
        }
        v
    }

    /// Node features `(X_W, X_F, β_i)` for turbine `i`.
    pub fn node_features(&self, i: usize) -> [f64; NODE_FEATURES] {
        let mut f = [0.0; NODE_FEATURES];
        f[..3].copy_from_slice(&self.wind);
        f[3..12].copy_from_slice(&self.forecast);
        f[12..].copy_from_slice(&self.orientations[i]);
        f
    }

    /// Positional-graph node features: `(sin K', cos K', sin β_i, cos β_i)`.
    pub fn positional_features(&self, i: usize) -> [f64; POSITIONAL_FEATURES] {
        [self.wind[0], self.wind[1], self.orientations[i][0], self.orientations[i][1]]
    }
}

pub fn normalize_observation(layout: &FarmLayout, wind: &WindParams, state: &EnvState) -> Observation {
    let (k, v) = state.wind_obs;
    let (s, c) = sin_cos_deg(k);
    let mut forecast = [0.0; FORECAST_FEATURES];
    for (l, &(fk, fv)) in state.forecast.iter().enumerate() {
        let (s, c) = sin_cos_deg(fk);
        forecast[3 * l..3 * l + 3].copy_from_slice(&[s, c, wind.normalize_speed(fv)]);
    }
    Observation {
        wind: [s, c, wind.normalize_speed(v)],
        forecast,
        orientations: state
            .orientations
            .iter()
            .map(|&b| {
                let (s, c) = sin_cos_deg(b);
                [s, c]
            })
            .collect(),
        graph: build_wake_graph(layout, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{diamond_layout, row_layout, yaw_angle};
    use crate::wake::turbine_power;

    fn single() -> FarmLayout {
        FarmLayout::new(vec![[0.0, 0.0]], 240.0).unwrap()
    }

    fn static_config() -> EnvConfig {
        EnvConfig {
            wind: WindParams { dir_noise_deg: 0.0, speed_noise_ms: 0.0, ..WindParams::default().frozen() },
            ..EnvConfig::default()
        }
    }

    #[test]
    fn reward_invalid_examples() {
        assert_eq!(reward_invalid(&[0.0, 20.0, -20.0]), 0.0);
        assert_eq!(reward_invalid(&[0.0, 90.0]), -0.0625);
        assert_eq!(reward_invalid(&[-180.0]), -1.0);
    }

    #[test]
    fn reward_power_examples() {
        assert_eq!(reward_power(-0.1, 0.5, 3.0), -0.1);
        assert_eq!(reward_power(0.1, 0.0, 3.0), 0.1);
        assert!((reward_power(0.1, 0.2, 3.0) - 0.054881).abs() < 1e-6);
        assert_eq!(reward_power(0.0, 0.4, 3.0), 0.0);
    }

    #[test]
    fn reward_total_examples() {
        assert_eq!(reward_total(&[0.0, 5.0], 10.0, 10.0, 0.3, 1.0, 100.0, 3.0).unwrap(), 0.0);
        let r = reward_total(&[0.0], 105.0, 100.0, 0.0, 1.0, 100.0, 3.0).unwrap();
        assert!((r - 5.0).abs() < 1e-12);
        assert!(reward_total(&[0.0], 1.0, 0.0, 0.0, 1.0, 100.0, 3.0).is_err());
        let d = EnvConfig::default();
        assert_eq!((d.w0, d.w1, d.p, d.horizon), (1.0, 100.0, 3.0, 18));
    }

    #[test]
    fn reset_respects_direction_bin_and_yaw_range() {
        let layout = diamond_layout(4.0, 240.0).unwrap();
        for seed in 0..20 {
            let env = WffcEnv::reset(layout.clone(), TurbineModel::default(), EnvConfig::default(), seed, (37.0, 38.0)).unwrap();
            let s = env.state();
            assert!((37.0..38.0).contains(&s.true_wind.0));
            assert!((3.0..=10.0).contains(&s.true_wind.1));
            assert!(s.yaws.iter().all(|a| a.abs() <= 20.0));
            for (b, a) in s.orientations.iter().zip(&s.yaws) {
                assert!((0.0..360.0).contains(b));
                assert_eq!(*a, yaw_angle(s.true_wind.0, *b).unwrap());
            }
        }
        let a = WffcEnv::reset(layout.clone(), TurbineModel::default(), EnvConfig::default(), 5, (0.0, 360.0)).unwrap();
        let b = WffcEnv::reset(layout.clone(), TurbineModel::default(), EnvConfig::default(), 5, (0.0, 360.0)).unwrap();
        assert_eq!(a.state(), b.state());
        assert!(WffcEnv::reset(layout, TurbineModel::default(), EnvConfig::default(), 5, (10.0, 10.0)).is_err());
    }

    #[test]
    fn zero_action_under_static_wind_keeps_yaws() {
        let mut env = WffcEnv::reset(diamond_layout(4.0, 240.0).unwrap(), TurbineModel::default(), static_config(), 1, (0.0, 360.0)).unwrap();
        let before = env.state().yaws.clone();
        let out = env.step(&[0.0; 19]).unwrap();
        assert_eq!(out.applied_yaws, before);
        assert_eq!(env.state().yaws, before);
    }

    #[test]
    fn single_turbine_best_action_cancels_yaw() {
        // the env draws alpha0 itself; pick the seed's yaw and grid the action
        let mut env = WffcEnv::reset(single(), TurbineModel::default(), static_config(), 3, (100.0, 101.0)).unwrap();
        let alpha = env.state().yaws[0];
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=400 {
            let a = -20.0 + 0.1 * i as f64;
            let mut e = env.clone();
            let p = e.step(&[a]).unwrap().farm_power;
            if p > best.0 {
                best = (p, a);
            }
        }
        assert!((best.1 - alpha).abs() < 0.051, "best action {} vs yaw {alpha}", best.1);
        let out = env.step(&[alpha]).unwrap();
        assert!(out.applied_yaws[0].abs() < 1e-9);
    }

    #[test]
    fn episode_length_and_done_flag() {
        let mut env = WffcEnv::reset(row_layout(3, 4.0, 240.0).unwrap(), TurbineModel::default(), EnvConfig::default(), 9, (0.0, 360.0)).unwrap();
        let mut rewards = 0;
        for t in 0..18 {
            let out = env.step(&[0.0; 3]).unwrap();
            rewards += 1;
            assert_eq!(out.done, t + 1 == 18);
            assert!((0.0..1.0).contains(&out.wake_losses));
        }
        assert_eq!(rewards, 18);
        assert!(env.is_done());
        assert!(matches!(env.step(&[0.0; 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn transition_consistency() {
        let mut env = WffcEnv::reset(diamond_layout(4.0, 240.0).unwrap(), TurbineModel::default(), EnvConfig::default(), 4, (0.0, 360.0)).unwrap();
        for t in 0..18 {
            let actions: Vec<f64> = (0..19).map(|i| ((i * 7 + t * 3) % 41) as f64 - 20.0).collect();
            env.step(&actions).unwrap();
            let s = env.state();
            for (b, a) in s.orientations.iter().zip(&s.yaws) {
                assert_eq!(*a, yaw_angle(s.true_wind.0, *b).unwrap());
            }
        }
    }

    #[test]
    fn action_contract() {
        let mut env = WffcEnv::reset(single(), TurbineModel::default(), EnvConfig::default(), 0, (0.0, 360.0)).unwrap();
        assert!(matches!(env.step(&[20.5]), Err(Error::Contract(_))));
        assert!(matches!(env.step(&[f64::NAN]), Err(Error::Contract(_))));
        assert!(matches!(env.step(&[0.0, 0.0]), Err(Error::Contract(_))));
        assert!(env.step(&[-20.0]).is_ok());
    }

    #[test]
    fn baseline_and_wake_losses() {
        let m = TurbineModel::default();
        let one = single();
        assert_eq!(baseline_power(&one, &m, 12.0, 7.0).unwrap(), turbine_power(7.0, 0.0, &m).unwrap());
        assert_eq!(wake_losses(&one, &m, 12.0, 7.0).unwrap(), 0.0);
        let pair = FarmLayout::new(vec![[0.0, 0.0], [960.0, 0.0]], 240.0).unwrap();
        assert!(wake_losses(&pair, &m, 270.0, 8.0).unwrap() > 0.0);
        assert!(wake_losses(&pair, &m, 0.0, 8.0).unwrap().abs() < 1e-12);
        assert!(wake_losses(&pair, &m, 270.0, 2.0).is_err());
        let diamond = diamond_layout(4.0, 240.0).unwrap();
        let ideal = ideal_power(&diamond, &m, 8.0).unwrap();
        assert!(baseline_power(&diamond, &m, 270.0, 8.0).unwrap() < ideal);
    }

    #[test]
    fn observation_normalization() {
        let w = WindParams::default();
        assert_eq!(w.normalize_speed(6.5), 0.0);
        let layout = row_layout(3, 4.0, 240.0).unwrap();
        let env = WffcEnv::reset(layout.clone(), TurbineModel::default(), EnvConfig::default(), 2, (0.0, 360.0)).unwrap();
        let mut state = env.state().clone();
        state.wind_obs.0 = 90.0;
        let obs = normalize_observation(&layout, &w, &state);
        assert!((obs.wind[0] - 1.0).abs() < 1e-12 && obs.wind[1].abs() < 1e-12);
        let flat = obs.flat();
        assert_eq!(flat.len(), flat_features(3));
        assert!(flat.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(obs.node_features(1)[12..], obs.orientations[1]);
        assert_eq!(obs.graph, build_wake_graph(&layout, 90.0));
    }

    #[test]
    fn terminal_state_forecast_repeats_tail() {
        let mut env = WffcEnv::reset(single(), TurbineModel::default(), EnvConfig::default(), 6, (0.0, 360.0)).unwrap();
        for _ in 0..18 {
            env.step(&[0.0]).unwrap();
        }
        let s = env.state();
        let series = env.series();
        assert_eq!(series.len(), 21);
        assert_eq!(s.forecast[2], (series.direction_noisy[20], series.speed_noisy[20]));
        assert_eq!(s.forecast[1], s.forecast[2]);
    }
}
