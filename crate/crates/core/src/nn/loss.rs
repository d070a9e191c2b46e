use super::tensor::{Real, Tensor4};
use crate::{Error, Result};

/// Floor applied to probabilities before taking the log.
const PROB_FLOOR: f64 = 1e-12;

pub fn one_hot(label: usize, n_classes: usize) -> Vec<f32> {
    let mut v = vec![0.0; n_classes];
    v[label] = 1.0;
    v
}

/// Mean cross-entropy between probability rows and soft targets, with the
/// gradient w.r.t. the probabilities.
pub fn softmax_cross_entropy<T: Real>(
    probs: &Tensor4<T>,
    targets: &[T],
) -> Result<(T, Tensor4<T>)> {
    if targets.len() != probs.len() {
        return Err(Error::Shape(format!(
            "{} targets for {} outputs",
            targets.len(),
            probs.len()
        )));
    }
    let b = T::from_usize(probs.batch()).unwrap();
    let floor = T::lit(PROB_FLOOR);
    let mut loss = T::zero();
    let mut grad = Tensor4::zeros(probs.dims());
    for ((&p, &t), g) in probs.data().iter().zip(targets).zip(grad.data_mut()) {
        let p = p.max(floor);
        loss -= t * p.ln();
        *g = -t / (p * b);
    }
    let loss = loss / b;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok((loss, grad))
}

/// Gradient of the mean cross-entropy w.r.t. the logits feeding a softmax,
/// `(p - t) / B`. Targets must sum to one per row.
pub fn fused_logit_grad<T: Real>(probs: &Tensor4<T>, targets: &[T]) -> Tensor4<T> {
    let b = T::from_usize(probs.batch()).unwrap();
    let mut g = probs.clone();
    for (v, &t) in g.data_mut().iter_mut().zip(targets) {
        *v = (*v - t) / b;
    }
    g
}
