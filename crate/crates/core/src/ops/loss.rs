//! Binary cross-entropy averaged over every element.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

/// `-(1/N) * sum(y log p + (1 - y) log(1 - p))` over all `N` elements, with
/// `p` clamped to `[eps, 1 - eps]`, plus its gradient with respect to `p`.
///
/// The gradient is evaluated at the clamped prediction (the clamp is treated
/// as a pass-through), so saturated outputs still receive a learning signal.
pub fn bce_loss<T: Scalar>(predictions: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    targets.ensure_shape("bce_loss", "targets", predictions.shape())?;
    let eps = T::from_f64_lossy(BCE_EPSILON);
    let one = T::one();
    let n = T::from_usize(predictions.len()).expect("element count fits");
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p, &y) in predictions.data().iter().zip(targets.data()) {
        // NaN must survive the clamp so divergence is visible in the loss
        let p = if p.is_nan() { p } else { p.max(eps).min(one - eps) };
        total += y * p.ln() + (one - y) * (one - p).ln();
        grad.push((p - y) / (p * (one - p)) / n);
    }
    Ok((-total / n, Tensor::new(predictions.shape(), grad)?))
}
