use crate::error::{Error, Result};
use crate::scalar::Real;

/// Stabilizer in the relative-L2 denominator.
pub const REL_L2_EPS: f64 = 0.01;

/// Loss and gradient of one element, `(p - t)^2 / (p^2 + eps)` with the
/// denominator held constant.
#[inline]
pub fn relative_l2_element(pred: f64, target: f64) -> (f64, f64) {
    let denom = pred * pred + REL_L2_EPS;
    let r = pred - target;
    (r * r / denom, 2.0 * r / denom)
}

/// Mean relative-L2 over all elements and its gradient with respect to `pred`.
pub fn relative_l2_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let (l, g) = relative_l2_element(p.as_f64(), t.as_f64());
            loss += l;
            T::of(g / n)
        })
        .collect();
    Ok((loss / n, grad))
}

/// Adds `2 * lambda * w` to `grads` and returns `lambda * sum(w^2)`.
pub fn l2_regularization<T: Real>(params: &[T], lambda: f64, grads: &mut [T]) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("regularization weight {lambda} must be >= 0")));
    }
    if params.len() != grads.len() {
        return Err(Error::Shape("regularization gradient buffer size".into()));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let s = T::of(2.0 * lambda);
    let mut sum = 0.0;
    for (g, &w) in grads.iter_mut().zip(params) {
        sum += w.as_f64() * w.as_f64();
        *g += s * w;
    }
    Ok(lambda * sum)
}
