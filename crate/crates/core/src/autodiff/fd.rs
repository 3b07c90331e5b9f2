//! Central finite-difference oracle for tape gradients.

use super::graph::Graph;
use super::tape::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Maximum relative error between the tape gradient of the scalar `f` at
/// `leaf` and central differences with step `eps`, over every element.
pub fn finite_diff_check<F>(f: F, leaf: &Tensor<f64>, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&Tape<f64>, Var) -> Result<Var, TensorError>,
{
    let all: Vec<usize> = (0..leaf.numel()).collect();
    finite_diff_check_at(f, leaf, eps, &all)
}

/// Like [`finite_diff_check`] but only probes the listed element indices.
pub fn finite_diff_check_at<F>(
    f: F,
    leaf: &Tensor<f64>,
    eps: f64,
    indices: &[usize],
) -> Result<f64, TensorError>
where
    F: Fn(&Tape<f64>, Var) -> Result<Var, TensorError>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::Contract(format!(
            "finite-difference step must be positive and finite, got {eps}"
        )));
    }
    let tape = Tape::new();
    let x = tape.leaf(leaf.clone());
    let out = f(&tape, x)?;
    let analytic = tape.backward(out)?.wrt(x);

    let eval = |t: Tensor<f64>| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let x = tape.leaf(t);
        let out = f(&tape, x)?;
        Ok(tape.value(&out).data()[0])
    };
    let mut worst = 0.0f64;
    for &i in indices {
        let mut plus = leaf.clone();
        plus.data_mut()[i] += eps;
        let mut minus = leaf.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}
