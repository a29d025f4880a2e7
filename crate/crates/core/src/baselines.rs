//! Non-learning yaw controllers.
//!
//! * standard: every turbine tracks the measured wind direction.
//! * Gauss-Seidel: one upstream-to-downstream sweep of per-turbine grid
//!   searches on the measured wind.
//! * heuristic: the same sweep on a forecast-weighted objective, holding
//!   the chosen orientations over the forecast horizon.

use std::fmt;
use std::str::FromStr;

use crate::env::{EnvState, MAX_ROTATION_DEG};
use crate::error::{Error, Result};
use crate::geometry::{upstream_order, wrap_unchecked, FarmLayout};
use crate::wake::{compute_flow, TurbineModel, MAX_OPERATING_YAW_DEG};
use crate::wind::FORECAST_HORIZON;

pub const GRID_POINTS: usize = 40;
pub const DEFAULT_HORIZON_WEIGHTS: [f64; FORECAST_HORIZON + 1] = [1.0, 0.5, 0.25, 0.125];

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDecision {
    /// Rotations in degrees, each within `[−20, 20]`.
    pub actions: Vec<f64>,
    /// Yaw each turbine aims for relative to the measured direction.
    pub intended_yaws: Vec<f64>,
    /// Objective at `intended_yaws`, for the optimizers.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Standard,
    GaussSeidel,
    Heuristic,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Standard => "standard",
            BaselineKind::GaussSeidel => "gauss-seidel",
            BaselineKind::Heuristic => "heuristic",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "gauss-seidel" => Ok(Self::GaussSeidel),
            "heuristic" => Ok(Self::Heuristic),
            _ => Err(Error::Config(format!("unknown controller {s:?}"))),
        }
    }
}

/// 40 evenly spaced yaws over `[−20, 20]` (both ends included), plus 0.
pub fn yaw_grid() -> Vec<f64> {
    let lo = -MAX_OPERATING_YAW_DEG;
    let step = 2.0 * MAX_OPERATING_YAW_DEG / (GRID_POINTS - 1) as f64;
    let mut g: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    if !g.contains(&0.0) {
        g.push(0.0);
    }
    g
}

fn clamp_rotation(x: f64) -> f64 {
    x.clamp(-MAX_ROTATION_DEG, MAX_ROTATION_DEG)
}

/// Rotations that bring each turbine to `K' − intended_yaw`, clamped.
fn actions_for(state: &EnvState, intended: &[f64]) -> Vec<f64> {
    let k = state.wind_obs.0;
    state.orientations.iter().zip(intended).map(|(&b, &y)| clamp_rotation(wrap_unchecked(k - y - b))).collect()
}

pub fn standard_controller(state: &EnvState) -> ControllerDecision {
    let intended = vec![0.0; state.orientations.len()];
    ControllerDecision { actions: actions_for(state, &intended), intended_yaws: intended, objective: None }
}

/// Result of a serial-refine sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub yaws: Vec<f64>,
    pub objective: f64,
    /// Objective after the initial evaluation and after each turbine's update.
    pub history: Vec<f64>,
}

/// Sweeps turbines in `order`, replacing a turbine's yaw by the grid value
/// with the highest objective when that beats the incumbent strictly.
pub fn serial_refine(n: usize, order: &[usize], mut objective: impl FnMut(&[f64]) -> Result<f64>) -> Result<Refinement> {
    let grid = yaw_grid();
    let mut yaws = vec![0.0; n];
    let mut best = objective(&yaws)?;
    let mut history = vec![best];
    for &i in order {
        let incumbent = yaws[i];
        let mut choice = incumbent;
        for &y in &grid {
            if y == incumbent {
                continue;
            }
            yaws[i] = y;
            let value = objective(&yaws)?;
            if value > best {
                best = value;
                choice = y;
            }
        }
        yaws[i] = choice;
        history.push(best);
    }
    Ok(Refinement { yaws, objective: best, history })
}

pub fn gauss_seidel_controller(layout: &FarmLayout, model: &TurbineModel, state: &EnvState) -> Result<ControllerDecision> {
    let (k, v) = state.wind_obs;
    let order = upstream_order(layout, k);
    let r = serial_refine(layout.n_turbines(), &order, |y| Ok(compute_flow(layout, model, k, v, y)?.farm_power))?;
    Ok(ControllerDecision { actions: actions_for(state, &r.yaws), intended_yaws: r.yaws, objective: Some(r.objective) })
}

/// `Σ_l ω_l · P(K'_{t+l}, V'_{t+l})` with orientations `K'_t − yaws` held fixed.
pub fn horizon_objective(
    layout: &FarmLayout,
    model: &TurbineModel,
    state: &EnvState,
    weights: &[f64; FORECAST_HORIZON + 1],
    yaws: &[f64],
) -> Result<f64> {
    let k_now = state.wind_obs.0;
    let mut total = 0.0;
    let mut effective = vec![0.0; yaws.len()];
    let winds = std::iter::once(state.wind_obs).chain(state.forecast.iter().copied());
    for (&w, (k, v)) in weights.iter().zip(winds) {
        if w == 0.0 {
            continue;
        }
        for (e, &y) in effective.iter_mut().zip(yaws) {
            *e = wrap_unchecked(k - (k_now - y));
        }
        total += w * compute_flow(layout, model, k, v, &effective)?.farm_power;
    }
    Ok(total)
}

pub fn heuristic_controller(
    layout: &FarmLayout,
    model: &TurbineModel,
    state: &EnvState,
    weights: &[f64; FORECAST_HORIZON + 1],
) -> Result<ControllerDecision> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Config(format!("horizon weights must be finite and non-negative, got {weights:?}")));
    }
    let order = upstream_order(layout, state.wind_obs.0);
    let r = serial_refine(layout.n_turbines(), &order, |y| horizon_objective(layout, model, state, weights, y))?;
    Ok(ControllerDecision { actions: actions_for(state, &r.yaws), intended_yaws: r.yaws, objective: Some(r.objective) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_forty_points_and_zero() {
        let g = yaw_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], -20.0);
        assert_eq!(g[39], 20.0);
        assert_eq!(g[40], 0.0);
    }

    #[test]
    fn refine_never_decreases() {
        let r = serial_refine(3, &[2, 0, 1], |y| Ok(-(y[0] - 3.0).powi(2) - (y[1] + 7.0).abs() + y[2].sin())).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.history.len(), 4);
    }
}
