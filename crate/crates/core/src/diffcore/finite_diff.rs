//! Central finite differences, the independent oracle for every gradient
//! produced by the tape.

use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};

/// Default step for 64-bit central differences.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Estimates `∂f/∂x_i ≈ (f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "finite_diff_grad: step must be > 0, got {step}"
        )));
    }
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_diff_grad",
            });
        }
        out.push((plus - minus) / (2.0 * step));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Relative error between an analytic and a numeric gradient entry.
///
/// Differences at or below `abs_floor` count as exact agreement; otherwise
/// the difference is scaled by the larger magnitude of the two.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Largest [`relative_error`] over all entries.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, abs_floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n, abs_floor))
        .fold(0.0, f64::max)
}
