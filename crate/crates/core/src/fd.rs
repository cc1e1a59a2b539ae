//! Central finite differences: the independent oracle every derivative
//! claim in this crate is checked against.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference gradient estimate of a scalar function:
/// (f(x + εeᵢ) − f(x − εeᵢ)) / 2ε per coordinate.
pub fn finite_difference(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    point: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut grad = vec![0.0; point.len()];
    let mut probe = point.clone();
    for (i, slot) in grad.iter_mut().enumerate() {
        let base = point.data()[i];
        probe.data_mut()[i] = base + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = base - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = base;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite_difference probe at coordinate {i}"
            )));
        }
        *slot = (plus - minus) / (2.0 * eps);
    }
    Tensor::new(point.shape().to_vec(), grad)
}

/// Max relative deviation between two tensors, with the denominator floored
/// so vanishing oracles do not blow the ratio up.
pub fn max_rel_err(got: &Tensor, want: &Tensor) -> f64 {
    let scale = want
        .data()
        .iter()
        .chain(got.data())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    got.data()
        .iter()
        .zip(want.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / scale))
}
