//! Steady-state wake and power model.
//!
//! Each turbine sheds a Gaussian velocity deficit whose width grows linearly
//! downstream. Yawed rotors skew their wake sideways following a closed-form
//! deflection law. Deficits from several upstream machines combine by
//! root-sum-square and are sampled at the hub point of the receiving turbine.

use crate::error::{Error, Result};
use crate::geometry::{crosswind_vector, flow_vector, FarmLayout, STREAMWISE_TOL_M};

/// Yaw magnitude beyond which a turbine shuts down.
pub const MAX_OPERATING_YAW_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbineModel {
    /// Rotor diameter, m.
    pub rotor_diameter: f64,
    /// W.
    pub rated_power: f64,
    /// m/s.
    pub cut_in: f64,
    /// kg/m³.
    pub air_density: f64,
    pub cp: f64,
    pub ct: f64,
    /// Exponent of the cosine yaw loss.
    pub yaw_exponent: f64,
    /// Linear growth rate of the wake width.
    pub wake_expansion: f64,
    /// Recovery rate of the yaw-induced wake skew.
    pub deflection_rate: f64,
}

impl Default for TurbineModel {
    /// 15 MW class offshore machine.
    fn default() -> Self {
        Self {
            rotor_diameter: 240.0,
            rated_power: 15e6,
            cut_in: 3.0,
            air_density: 1.225,
            cp: 0.43,
            ct: 0.8,
            yaw_exponent: 1.88,
            wake_expansion: 0.05,
            deflection_rate: 0.05,
        }
    }
}

impl TurbineModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rotor_diameter,
            self.rated_power,
            self.cut_in,
            self.air_density,
            self.cp,
            self.ct,
            self.yaw_exponent,
            self.wake_expansion,
            self.deflection_rate,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("turbine parameters must be finite and positive".into()));
        }
        if self.cp >= 16.0 / 27.0 {
            return Err(Error::Config(format!("cp {} exceeds the Betz limit", self.cp)));
        }
        if self.ct >= 1.0 {
            return Err(Error::Config(format!("ct {} must be below 1", self.ct)));
        }
        Ok(())
    }

    fn rotor_area(&self) -> f64 {
        std::f64::consts::PI * self.rotor_diameter * self.rotor_diameter / 4.0
    }

    /// Velocity deficit fraction at downstream distance `x` and lateral
    /// distance `r` from the (deflected) wake centerline of a rotor at `yaw`.
    pub fn deficit(&self, x: f64, r: f64, yaw_deg: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let d = self.rotor_diameter;
        let sigma = self.wake_expansion * x + d / 8f64.sqrt();
        let s = sigma / d;
        let c = 1.0 - (1.0 - self.ct * yaw_deg.to_radians().cos() / (8.0 * s * s)).max(0.0).sqrt();
        c * (-r * r / (2.0 * sigma * sigma)).exp()
    }

    /// Lateral offset of the wake centerline `x` meters downstream.
    pub fn deflection(&self, x: f64, yaw_deg: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let d = self.rotor_diameter;
        let g = yaw_deg.to_radians();
        let skew = 0.5 * self.ct * g.sin() * g.cos() * g.cos();
        let kd = self.deflection_rate;
        skew * d / (2.0 * kd) * (1.0 - 1.0 / (1.0 + 2.0 * kd * x / d))
    }
}

/// Electrical power of one turbine at effective speed `v_eff` and yaw offset `yaw`.
pub fn turbine_power(v_eff: f64, yaw: f64, model: &TurbineModel) -> Result<f64> {
    if !(v_eff >= 0.0) {
        return Err(Error::Domain(format!("effective wind speed must be non-negative, got {v_eff}")));
    }
    Ok(power_unchecked(v_eff, yaw, model))
}

fn power_unchecked(v_eff: f64, yaw: f64, model: &TurbineModel) -> f64 {
    if yaw.abs() > MAX_OPERATING_YAW_DEG || v_eff < model.cut_in {
        return 0.0;
    }
    let aero = 0.5 * model.air_density * model.rotor_area() * model.cp * v_eff.powi(3);
    let loss = yaw.to_radians().cos().powf(model.yaw_exponent);
    model.rated_power.min(aero * loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub effective_speeds: Vec<f64>,
    pub powers: Vec<f64>,
    pub farm_power: f64,
}

/// One wind condition and yaw setting to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCase {
    pub direction: f64,
    pub speed: f64,
    pub yaws: Vec<f64>,
}

/// Hub positions in the flow-aligned frame: `(streamwise, crosswind)`.
fn flow_frame(layout: &FarmLayout, k: f64) -> Vec<[f64; 2]> {
    let f = flow_vector(k);
    let c = crosswind_vector(k);
    layout
        .positions()
        .iter()
        .map(|p| [p[0] * f[0] + p[1] * f[1], p[0] * c[0] + p[1] * c[1]])
        .collect()
}

fn check_inputs(layout: &FarmLayout, v: f64, yaws: &[f64]) -> Result<()> {
    if yaws.len() != layout.n_turbines() {
        return Err(Error::Contract(format!(
            "{} yaw angles for {} turbines",
            yaws.len(),
            layout.n_turbines()
        )));
    }
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("free-stream speed must be finite and non-negative, got {v}")));
    }
    if yaws.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("yaw angles must be finite".into()));
    }
    Ok(())
}

/// Wake-affected speeds and powers for wind from `k` at speed `v`.
pub fn compute_flow(layout: &FarmLayout, model: &TurbineModel, k: f64, v: f64, yaws: &[f64]) -> Result<FlowResult> {
    check_inputs(layout, v, yaws)?;
    let frame = flow_frame(layout, k);
    let n = frame.len();
    let mut effective_speeds = Vec::with_capacity(n);
    let mut powers = Vec::with_capacity(n);
    for j in 0..n {
        let mut sum_sq = 0.0;
        for i in 0..n {
            let x = frame[j][0] - frame[i][0];
            if x <= STREAMWISE_TOL_M {
                continue;
            }
            let r = frame[j][1] - frame[i][1] - model.deflection(x, yaws[i]);
            let dv = model.deficit(x, r, yaws[i]);
            sum_sq += dv * dv;
        }
        let combined = sum_sq.sqrt().min(1.0);
        let v_eff = v * (1.0 - combined);
        powers.push(power_unchecked(v_eff, yaws[j], model));
        effective_speeds.push(v_eff);
    }
    let farm_power = powers.iter().sum();
    Ok(FlowResult { effective_speeds, powers, farm_power })
}

/// Evaluates many cases at once; results come back in input order.
pub fn compute_flow_batch(layout: &FarmLayout, model: &TurbineModel, cases: &[FlowCase]) -> Result<Vec<FlowResult>> {
    let eval = |c: &FlowCase| compute_flow(layout, model, c.direction, c.speed, &c.yaws);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cases.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cases.iter().map(eval).collect()
    }
}

/// Farm power with every turbine aligned and no wake interaction.
pub fn ideal_power(layout: &FarmLayout, model: &TurbineModel, v: f64) -> Result<f64> {
    Ok(layout.n_turbines() as f64 * turbine_power(v, 0.0, model)?)
}

/// Free-stream-normalized wind speed at arbitrary points of the horizontal
/// plane (hub height). Used for visualization.
pub fn velocity_field(layout: &FarmLayout, model: &TurbineModel, k: f64, yaws: &[f64], points: &[[f64; 2]]) -> Result<Vec<f64>> {
    check_inputs(layout, 1.0, yaws)?;
    let frame = flow_frame(layout, k);
    let f = flow_vector(k);
    let c = crosswind_vector(k);
    Ok(points
        .iter()
        .map(|p| {
            let (s, q) = (p[0] * f[0] + p[1] * f[1], p[0] * c[0] + p[1] * c[1]);
            let mut sum_sq = 0.0;
            for (i, h) in frame.iter().enumerate() {
                let x = s - h[0];
                let r = q - h[1] - model.deflection(x, yaws[i]);
                let dv = model.deficit(x, r, yaws[i]);
                sum_sq += dv * dv;
            }
            1.0 - sum_sq.sqrt().min(1.0)
        })
        .collect())
}
