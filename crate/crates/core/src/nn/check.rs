//! Central finite-difference gradient checking.

use rand::Rng as _;

use super::params::{Gradients, ParamStore};
use crate::error::Result;
use crate::rng::Rng;

/// Denominator floor for relative errors, so coordinates whose true
/// gradient is essentially zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `grads` with central differences of `loss` at step `eps`.
///
/// Every coordinate of tensors with at most `max_per_tensor` entries is
/// checked; larger tensors are sampled at `max_per_tensor` random positions.
pub fn check_gradients(
    store: &ParamStore,
    grads: &Gradients,
    eps: f64,
    max_per_tensor: usize,
    rng: &mut Rng,
    loss: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<CheckReport> {
    let mut probe = store.clone();
    let mut report = CheckReport { max_rel_error: 0.0, coords_checked: 0 };
    for id in store.ids() {
        let len = store.get(id).len();
        let coords: Vec<usize> = if len <= max_per_tensor {
            (0..len).collect()
        } else {
            (0..max_per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for c in coords {
            let x = store.get(id).data()[c];
            probe.get_mut(id).data_mut()[c] = x + eps;
            let up = loss(&probe)?;
            probe.get_mut(id).data_mut()[c] = x - eps;
            let down = loss(&probe)?;
            probe.get_mut(id).data_mut()[c] = x;
            let numeric = (up - down) / (2.0 * eps);
            let err = rel_error(grads.get(id).data()[c], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.coords_checked += 1;
        }
    }
    Ok(report)
}
