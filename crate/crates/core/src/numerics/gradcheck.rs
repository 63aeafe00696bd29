//! Central-difference gradient oracle.

use super::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub max_relative_error: f64,
    /// Multi-index of the worst coordinate.
    pub worst_coordinate: Vec<usize>,
    pub passed: bool,
}

/// Unravels a flat row-major index into a multi-index for `shape`.
pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (slot, &dim) in idx.iter_mut().zip(shape).rev() {
        if dim > 0 {
            *slot = flat % dim;
            flat /= dim;
        }
    }
    idx
}

/// Relative error with a `max(1, |a|, |n|)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares a supplied analytic gradient against central differences of `value_at`.
pub fn compare_gradient(
    analytic: &Tensor<f64>,
    x: &Tensor<f64>,
    mut value_at: impl FnMut(&Tensor<f64>) -> Result<f64>,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckResult> {
    let mut probe = x.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = value_at(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = value_at(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic.data()[i], numeric);
        if err > worst.0 || err.is_nan() {
            worst = (if err.is_nan() { f64::INFINITY } else { err }, i);
        }
    }
    Ok(GradCheckResult {
        max_relative_error: worst.0,
        worst_coordinate: unravel(worst.1, x.shape()),
        passed: worst.0 <= tolerance,
    })
}

/// Checks the tape gradient of the scalar function `f` at `x`.
///
/// `f` receives a fresh tape and the leaf for `x`, and returns the scalar output.
pub fn gradient_check<F>(f: F, x: &Tensor<f64>, h: f64, tolerance: f64) -> Result<GradCheckResult>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    tape.backward(out)?;
    let analytic = tape
        .grad(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));
    compare_gradient(
        &analytic,
        x,
        |probe| {
            let mut t = Tape::new();
            let v = t.constant(probe.clone());
            let out = f(&mut t, v)?;
            t.value(out).item()
        },
        h,
        tolerance,
    )
}
