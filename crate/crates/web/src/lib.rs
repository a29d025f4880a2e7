//! wasm-bindgen bindings behind `www/index.html`.
//!
//! Each exported function has a plain Rust twin (`*_impl`) so the logic can be
//! tested natively; the exports only turn errors into JS exceptions.

use wasm_bindgen::prelude::*;

use wakesteer::baselines::{gauss_seidel_controller, standard_controller};
use wakesteer::env::EnvState;
use wakesteer::geometry::{cross_layout, diamond_layout, row_layout, FarmLayout};
use wakesteer::rng::{substream, Purpose};
use wakesteer::vonmises;
use wakesteer::wake::{compute_flow, velocity_field, TurbineModel};
use wakesteer::wind::FORECAST_HORIZON;
use wakesteer::{Error, Result};

/// Half-width of the rendered field around the farm, in rotor diameters.
const FIELD_MARGIN_D: f64 = 4.0;

pub fn layout_by_name(name: &str, spacing: f64) -> Result<FarmLayout> {
    let d = TurbineModel::default().rotor_diameter;
    match name {
        "diamond" => diamond_layout(spacing, d),
        "row" => row_layout(3, spacing, d),
        "cross" => cross_layout(spacing, d),
        _ => Err(Error::Config(format!("unknown layout {name:?}"))),
    }
}

/// Grid bounds `[x_min, x_max, y_min, y_max]` covering the farm plus a margin.
pub fn field_bounds(layout: &FarmLayout) -> [f64; 4] {
    let m = FIELD_MARGIN_D * layout.rotor_diameter();
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in layout.positions() {
        b[0] = b[0].min(p[0] - m);
        b[1] = b[1].max(p[0] + m);
        b[2] = b[2].min(p[1] - m);
        b[3] = b[3].max(p[1] + m);
    }
    b
}

/// Row-major `ny × nx` normalized speeds, first row at `y_max` (screen order).
pub fn wake_field_impl(layout: &str, spacing: f64, k: f64, yaws: &[f64], nx: usize, ny: usize) -> Result<Vec<f64>> {
    if nx < 2 || ny < 2 {
        return Err(Error::Config("field needs at least 2x2 points".into()));
    }
    let farm = layout_by_name(layout, spacing)?;
    let [x0, x1, y0, y1] = field_bounds(&farm);
    let mut points = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = y1 - (y1 - y0) * j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            points.push([x0 + (x1 - x0) * i as f64 / (nx - 1) as f64, y]);
        }
    }
    velocity_field(&farm, &TurbineModel::default(), k, yaws, &points)
}

/// Flattened `[x, y]` pairs in meters.
pub fn turbine_positions_impl(layout: &str, spacing: f64) -> Result<Vec<f64>> {
    Ok(layout_by_name(layout, spacing)?.positions().iter().flat_map(|p| *p).collect())
}

/// `n` density values of VM(mu, kappa) on an even grid over `[−π, π)`.
pub fn vonmises_density_impl(mu: f64, kappa: f64, n: usize) -> Result<Vec<f64>> {
    vonmises::entropy(kappa)?;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    Ok((0..n).map(|i| vonmises::logpdf_unchecked(-std::f64::consts::PI + step * i as f64, mu, kappa).exp()).collect())
}

pub fn vonmises_samples_impl(mu: f64, kappa: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    vonmises::entropy(kappa)?;
    let mut rng = substream(seed, Purpose::Test, 0);
    Ok((0..count).map(|_| vonmises::sample(mu, kappa, &mut rng)).collect())
}

/// Snapshot with the wind steady at `(k, v)` and every turbine aligned.
fn aligned_state(n: usize, k: f64, v: f64) -> EnvState {
    EnvState {
        t: 0,
        wind_obs: (k, v),
        forecast: [(k, v); FORECAST_HORIZON],
        true_wind: (k, v),
        orientations: vec![k; n],
        yaws: vec![0.0; n],
    }
}

/// Farm power in MW for the standard controller, the Gauss-Seidel optimizer
/// and the given manual yaws, followed by the Gauss-Seidel yaws:
/// `[p_standard, p_gauss_seidel, p_manual, yaw_0, ..., yaw_{n-1}]`.
pub fn compare_controllers_impl(layout: &str, spacing: f64, k: f64, v: f64, manual: &[f64]) -> Result<Vec<f64>> {
    let farm = layout_by_name(layout, spacing)?;
    let model = TurbineModel::default();
    let state = aligned_state(farm.n_turbines(), k, v);
    let standard = standard_controller(&state);
    let gs = gauss_seidel_controller(&farm, &model, &state)?;
    let power = |yaws: &[f64]| compute_flow(&farm, &model, k, v, yaws).map(|f| f.farm_power / 1e6);
    let mut out = vec![power(&standard.intended_yaws)?, power(&gs.intended_yaws)?, power(manual)?];
    out.extend(&gs.intended_yaws);
    Ok(out)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn wake_field(layout: &str, spacing: f64, k: f64, yaws: &[f64], nx: usize, ny: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(wake_field_impl(layout, spacing, k, yaws, nx, ny))
}

#[wasm_bindgen]
pub fn field_extent(layout: &str, spacing: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(layout_by_name(layout, spacing).map(|l| field_bounds(&l).to_vec()))
}

#[wasm_bindgen]
pub fn turbine_positions(layout: &str, spacing: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(turbine_positions_impl(layout, spacing))
}

#[wasm_bindgen]
pub fn vonmises_density(mu: f64, kappa: f64, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(vonmises_density_impl(mu, kappa, n))
}

#[wasm_bindgen]
pub fn vonmises_samples(mu: f64, kappa: f64, count: usize, seed: u64) -> std::result::Result<Vec<f64>, JsError> {
    js(vonmises_samples_impl(mu, kappa, count, seed))
}

#[wasm_bindgen]
pub fn vonmises_entropy(kappa: f64) -> std::result::Result<f64, JsError> {
    js(vonmises::entropy(kappa))
}

#[wasm_bindgen]
pub fn compare_controllers(layout: &str, spacing: f64, k: f64, v: f64, manual: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    js(compare_controllers_impl(layout, spacing, k, v, manual))
}
