//! Von Mises distribution on the circle: density, entropy and exact sampling.
//!
//! Bessel functions use the power series below `ASYMPTOTIC_THRESHOLD` and the
//! large-argument asymptotic expansion above it, both evaluated in log space
//! so that concentrations up to 1e4 and beyond stay finite.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

const ASYMPTOTIC_THRESHOLD: f64 = 50.0;

/// Sums `Σ_k (x²/4)^k / (k! (k+ν)!)` for ν ∈ {0, 1}.
fn power_series(x: f64, nu: u32) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = term;
    for k in 1..500 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `Σ_k (-1)^k Π_{j≤k}(4ν² − (2j−1)²) / (k! (8x)^k)`, truncated at its smallest term.
fn asymptotic_series(x: f64, nu: u32) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (kf * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `ln I0(x)` for `x ≥ 0`.
pub fn log_i0(x: f64) -> f64 {
    if x < ASYMPTOTIC_THRESHOLD {
        power_series(x, 0).ln()
    } else {
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic_series(x, 0).ln()
    }
}

/// `(I1(x)/I0(x), I1(x)/(x I0(x)))`; the second stays finite as `x → 0`.
pub fn bessel_ratio(x: f64) -> (f64, f64) {
    if x < ASYMPTOTIC_THRESHOLD {
        let over_x = 0.5 * power_series(x, 1) / power_series(x, 0);
        (x * over_x, over_x)
    } else {
        let a = asymptotic_series(x, 1) / asymptotic_series(x, 0);
        (a, a / x)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("von Mises concentration must be positive and finite, got {kappa}")))
    }
}

/// `κ cos(x − μ) − ln(2π I0(κ))`, without domain checks.
#[inline]
pub fn logpdf_unchecked(x: f64, mu: f64, kappa: f64) -> f64 {
    kappa * (x - mu).cos() - LN_2PI - log_i0(kappa)
}

pub fn logpdf(x: f64, mu: f64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(logpdf_unchecked(x, mu, kappa))
}

/// `−κ I1/I0 + ln(2π I0(κ))`.
#[inline]
pub fn entropy_unchecked(kappa: f64) -> f64 {
    let (a, _) = bessel_ratio(kappa);
    -kappa * a + LN_2PI + log_i0(kappa)
}

pub fn entropy(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(entropy_unchecked(kappa))
}

/// `d/dκ` of the entropy: `−κ A'(κ)` with `A = I1/I0`, `A' = 1 − A/κ − A²`.
#[inline]
pub fn entropy_grad(kappa: f64) -> f64 {
    let (a, a_over_k) = bessel_ratio(kappa);
    -kappa * (1.0 - a_over_k - a * a)
}

/// Wraps radians into `[-π, π)`.
pub fn wrap_radians(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(2.0 * PI);
    let r = if r >= 2.0 * PI { r - 2.0 * PI } else { r };
    r - PI
}

/// Exact draw by the Best–Fisher rejection scheme, in `[-π, π)`.
pub fn sample(mu: f64, kappa: f64, rng: &mut Rng) -> f64 {
    if !(kappa >= 1e-8) {
        return wrap_radians(mu + PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    if kappa > 1e6 {
        // wrapped normal limit
        let z: f64 = StandardNormal.sample(rng);
        return wrap_radians(mu + z / kappa.sqrt());
    }
    let s = if kappa < 1e-5 {
        1.0 / kappa + kappa
    } else {
        let r = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
        let rho = (r - (2.0 * r).sqrt()) / (2.0 * kappa);
        (1.0 + rho * rho) / (2.0 * rho)
    };
    let w = loop {
        let z = (PI * rng.random::<f64>()).cos();
        let w = (1.0 + s * z) / (s + z);
        let y = kappa * (s - w);
        let v: f64 = rng.random();
        if y * (2.0 - y) - v >= 0.0 || (y / v).ln() + 1.0 - y >= 0.0 {
            break w;
        }
    };
    let theta = w.clamp(-1.0, 1.0).acos();
    let theta = if rng.random::<f64>() < 0.5 { -theta } else { theta };
    wrap_radians(theta + mu)
}
