//! ARMA(1,1) wind direction/speed series with uniform measurement noise.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::modulo_360;
use crate::rng::Rng;

/// Number of forecast steps available past the episode end.
pub const FORECAST_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindParams {
    pub v_min: f64,
    pub v_max: f64,
    /// Half-width of the uniform direction noise, degrees.
    pub dir_noise_deg: f64,
    /// Half-width of the uniform speed noise, m/s.
    pub speed_noise_ms: f64,
    pub arma_ma_coeff: f64,
    /// Variance of the direction innovation, deg².
    pub dir_step_var: f64,
    /// Variance of the speed innovation, (m/s)².
    pub speed_step_var: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        Self {
            v_min: 3.0,
            v_max: 10.0,
            dir_noise_deg: 3.0,
            speed_noise_ms: 0.1,
            arma_ma_coeff: 0.1,
            dir_step_var: 9.0,
            speed_step_var: 0.01,
        }
    }
}

impl WindParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min >= 0.0 && self.v_min < self.v_max) {
            return Err(Error::Config(format!("invalid speed bounds [{}, {}]", self.v_min, self.v_max)));
        }
        let nonneg = [self.dir_noise_deg, self.speed_noise_ms, self.dir_step_var, self.speed_step_var];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.arma_ma_coeff.is_finite() {
            return Err(Error::Config("wind noise and variance parameters must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Same bounds and noise, but a frozen wind (no ARMA innovation).
    pub fn frozen(self) -> Self {
        Self { dir_step_var: 0.0, speed_step_var: 0.0, ..self }
    }

    /// Maps a speed in `[v_min, v_max]` to `[-1, 1]`.
    pub fn normalize_speed(&self, v: f64) -> f64 {
        2.0 * (v - self.v_min) / (self.v_max - self.v_min) - 1.0
    }

    /// Reflects `v` off the speed bounds until it lies inside them.
    pub fn mirror(&self, mut v: f64) -> f64 {
        loop {
            if v > self.v_max {
                v = 2.0 * self.v_max - v;
            } else if v < self.v_min {
                v = 2.0 * self.v_min - v;
            } else {
                return v;
            }
        }
    }
}

/// True and observed wind over an episode plus the forecast tail.
#[derive(Debug, Clone, PartialEq)]
pub struct WindSeries {
    pub direction: Vec<f64>,
    pub speed: Vec<f64>,
    pub direction_noisy: Vec<f64>,
    pub speed_noisy: Vec<f64>,
    pub horizon: usize,
}

impl WindSeries {
    pub fn len(&self) -> usize {
        self.direction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direction.is_empty()
    }

    /// Observed values at offsets 1..=3 after `t`.
    pub fn forecast(&self, t: usize) -> Result<[(f64, f64); FORECAST_HORIZON]> {
        if t + FORECAST_HORIZON >= self.len() {
            return Err(Error::Index(format!("no {FORECAST_HORIZON}-step forecast at t={t} for a series of length {}", self.len())));
        }
        Ok(std::array::from_fn(|l| (self.direction_noisy[t + 1 + l], self.speed_noisy[t + 1 + l])))
    }
}

/// Innovation draws for the ARMA recursion; `eps[0]` is zero.
fn arma_innovations(rng: &mut Rng, len: usize, var: f64) -> Vec<f64> {
    let mut eps = vec![0.0; len];
    if var > 0.0 {
        let normal = Normal::new(0.0, var.sqrt()).expect("finite positive std");
        for e in eps.iter_mut().skip(1) {
            *e = normal.sample(rng);
        }
    }
    eps
}

/// Generates `steps + FORECAST_HORIZON` true wind values from `(k0, v0)`.
/// Noisy fields are left equal to the true ones; see [`add_noise`].
pub fn generate_series(rng: &mut Rng, steps: usize, k0: f64, v0: f64, params: &WindParams) -> Result<WindSeries> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::Config("series needs at least one step".into()));
    }
    if !(0.0..360.0).contains(&k0) {
        return Err(Error::Config(format!("initial direction {k0} outside [0, 360)")));
    }
    if !(params.v_min..=params.v_max).contains(&v0) {
        return Err(Error::Config(format!("initial speed {v0} outside [{}, {}]", params.v_min, params.v_max)));
    }
    let len = steps + FORECAST_HORIZON;
    let eps_k = arma_innovations(rng, len, params.dir_step_var);
    let eps_v = arma_innovations(rng, len, params.speed_step_var);
    let c = params.arma_ma_coeff;
    let mut direction = Vec::with_capacity(len);
    let mut speed = Vec::with_capacity(len);
    direction.push(k0);
    speed.push(v0);
    for t in 1..len {
        direction.push(modulo_360(eps_k[t] + direction[t - 1] + c * eps_k[t - 1]));
        speed.push(params.mirror(eps_v[t] + speed[t - 1] + c * eps_v[t - 1]));
    }
    Ok(WindSeries {
        direction_noisy: direction.clone(),
        speed_noisy: speed.clone(),
        direction,
        speed,
        horizon: FORECAST_HORIZON,
    })
}

/// Overwrites the observed fields with uniformly perturbed copies of the true ones.
pub fn add_noise(series: &mut WindSeries, rng: &mut Rng, params: &WindParams) {
    let (wk, wv) = (params.dir_noise_deg, params.speed_noise_ms);
    for t in 0..series.len() {
        let ek = wk * (2.0 * rng.random::<f64>() - 1.0);
        let ev = wv * (2.0 * rng.random::<f64>() - 1.0);
        series.direction_noisy[t] = modulo_360(series.direction[t] + ek);
        series.speed_noisy[t] = (series.speed[t] + ev).clamp(params.v_min, params.v_max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap_angle;
    use crate::rng::{substream, Purpose};

    fn rng(i: u64) -> Rng {
        substream(42, Purpose::Test, i)
    }

    #[test]
    fn recursion_arithmetic() {
        // K1 = eps1 + K0 + 0.1 * eps0 with eps0 = 0
        let p = WindParams::default();
        let mut r = rng(0);
        let s = generate_series(&mut r, 5, 100.0, 6.0, &p).unwrap();
        let mut r = rng(0);
        let eps = arma_innovations(&mut r, 8, 9.0);
        assert_eq!(eps[0], 0.0);
        assert!((s.direction[1] - modulo_360(100.0 + eps[1])).abs() < 1e-12);
        assert!((s.direction[2] - modulo_360(s.direction[1] + eps[2] + 0.1 * eps[1])).abs() < 1e-12);
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn mirroring_rule() {
        let p = WindParams::default();
        assert!((p.mirror(9.99 + 0.03) - 9.98).abs() < 1e-12);
        assert!((p.mirror(2.9) - 3.1).abs() < 1e-12);
        // overshoot past both bounds folds back repeatedly
        let tight = WindParams { v_min: 3.0, v_max: 3.5, ..p };
        let v = tight.mirror(5.2);
        assert!((3.0..=3.5).contains(&v));
        assert!((v - 3.2).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = WindParams::default();
        let a = generate_series(&mut rng(3), 18, 10.0, 5.0, &p).unwrap();
        let b = generate_series(&mut rng(3), 18, 10.0, 5.0, &p).unwrap();
        let c = generate_series(&mut rng(4), 18, 10.0, 5.0, &p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn config_errors() {
        let p = WindParams::default();
        assert!(generate_series(&mut rng(0), 0, 10.0, 5.0, &p).is_err());
        assert!(generate_series(&mut rng(0), 5, 360.0, 5.0, &p).is_err());
        assert!(generate_series(&mut rng(0), 5, 10.0, 11.0, &p).is_err());
        let bad = WindParams { v_min: 10.0, v_max: 3.0, ..p };
        assert!(matches!(generate_series(&mut rng(0), 5, 10.0, 5.0, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn noise_wraps_and_degenerates() {
        let p = WindParams::default();
        let mut s = generate_series(&mut rng(1), 18, 0.5, 5.0, &p.frozen()).unwrap();
        add_noise(&mut s, &mut rng(2), &p);
        for t in 0..s.len() {
            assert!((0.0..360.0).contains(&s.direction_noisy[t]));
            assert!(wrap_angle(s.direction_noisy[t] - s.direction[t]).unwrap().abs() <= 3.0);
            assert!((s.speed_noisy[t] - s.speed[t]).abs() <= 0.1 + 1e-12);
        }
        let silent = WindParams { dir_noise_deg: 0.0, speed_noise_ms: 0.0, ..p };
        let mut s = generate_series(&mut rng(1), 18, 0.0, 5.0, &p).unwrap();
        add_noise(&mut s, &mut rng(2), &silent);
        assert_eq!(s.direction_noisy, s.direction);
        assert_eq!(s.speed_noisy, s.speed);
        // K = 0 with a negative perturbation lands just below 360
        let mut s = WindSeries {
            direction: vec![0.0; 4],
            speed: vec![5.0; 4],
            direction_noisy: vec![0.0; 4],
            speed_noisy: vec![5.0; 4],
            horizon: 3,
        };
        add_noise(&mut s, &mut rng(5), &p);
        assert!(s.direction_noisy.iter().all(|&k| k < 3.0 || k > 357.0));
    }

    #[test]
    fn uniform_noise_bound_monte_carlo() {
        let p = WindParams::default();
        let mut s = WindSeries {
            direction: vec![180.0; 10_000],
            speed: vec![6.0; 10_000],
            direction_noisy: vec![0.0; 10_000],
            speed_noisy: vec![0.0; 10_000],
            horizon: 3,
        };
        add_noise(&mut s, &mut rng(9), &p);
        let eps: Vec<f64> = s.direction_noisy.iter().map(|k| k - 180.0).collect();
        let lo = eps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -3.0 && hi <= 3.0);
        assert!(lo < -2.9 && hi > 2.9);
    }

    #[test]
    fn forecast_offsets() {
        let p = WindParams::default();
        let mut s = generate_series(&mut rng(0), 18, 100.0, 6.0, &p).unwrap();
        add_noise(&mut s, &mut rng(1), &p);
        let f = s.forecast(0).unwrap();
        for l in 0..3 {
            assert_eq!(f[l], (s.direction_noisy[l + 1], s.speed_noisy[l + 1]));
        }
        let f = s.forecast(17).unwrap();
        assert_eq!(f[2], (s.direction_noisy[20], s.speed_noisy[20]));
        assert!(matches!(s.forecast(18), Err(Error::Index(_))));
    }

    #[test]
    fn speeds_stay_in_bounds_over_many_steps() {
        let p = WindParams::default();
        let s = generate_series(&mut rng(11), 1_000_000, 200.0, 9.9, &p).unwrap();
        assert!(s.speed.iter().all(|v| (3.0..=10.0).contains(v)));
    }

    #[test]
    fn direction_step_spread() {
        // Var(eps_t + 0.1 eps_{t-1}) = 9 + 0.01 * 9
        let p = WindParams::default();
        let s = generate_series(&mut rng(12), 100_000, 0.0, 5.0, &p).unwrap();
        let diffs: Vec<f64> = s.direction.windows(2).map(|w| wrap_angle(w[1] - w[0]).unwrap()).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (9.0f64 + 0.09).sqrt();
        assert!((std - expected).abs() < 0.1 * expected, "std {std}");
    }
}
