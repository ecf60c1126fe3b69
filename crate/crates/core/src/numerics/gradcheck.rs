//! Central finite-difference gradient verification.
//!
//! The checker perturbs each parameter scalar in turn and re-runs the
//! caller-supplied forward function, so it is independent of the tape's
//! backward rules.

use crate::Result;

use super::tensor::{ParamStore, Scalar, Tensor};

/// Central-difference gradients of `forward` with respect to every scalar in
/// `params`. `forward` must return the loss value for the given parameters.
pub fn finite_diff_gradients<T, F>(
    params: &ParamStore<T>,
    eps: f64,
    mut forward: F,
) -> Result<Vec<Tensor<T>>>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>) -> Result<T>,
{
    let eps_t: T = Scalar::from_f64(eps);
    let two: T = Scalar::from_f64(2.0);
    let mut out = Vec::new();
    let mut work = params.clone();
    for id in params.ids() {
        let t = params.get(id);
        let mut grad = Tensor::zeros(t.rows(), t.cols());
        for j in 0..t.len() {
            let orig = work.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + eps_t;
            let plus = forward(&work)?;
            work.get_mut(id).data_mut()[j] = orig - eps_t;
            let minus = forward(&work)?;
            work.get_mut(id).data_mut()[j] = orig;
            grad.data_mut()[j] = (plus - minus) / (two * eps_t);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Maximum relative error between analytic and reference gradients.
///
/// Per entry: `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero
/// entries from dominating through finite-difference noise.
pub fn max_rel_err<T: Scalar>(analytic: &[Tensor<T>], reference: &[Tensor<T>], floor: f64) -> f64 {
    let floor_t: T = Scalar::from_f64(floor);
    let mut worst = 0.0f64;
    for (a, b) in analytic.iter().zip(reference) {
        for (&av, &bv) in a.data().iter().zip(b.data()) {
            let denom = av.abs().max(bv.abs()).max(floor_t);
            let rel = ((av - bv).abs() / denom).to_f64_lossy();
            worst = worst.max(rel);
        }
    }
    worst
}
