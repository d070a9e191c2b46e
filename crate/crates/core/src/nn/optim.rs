use super::model::{Gradients, Model};
use super::tensor::Real;
use crate::{Error, Result};

/// SGD with classical momentum: `v = m·v - lr·g; p += v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: T,
    velocity: Vec<Vec<Vec<T>>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(model: &Model<T>, momentum: f64) -> Self {
        Self {
            momentum: T::lit(momentum),
            velocity: model
                .params
                .iter()
                .map(|ps| ps.iter().map(|p| vec![T::zero(); p.data.len()]).collect())
                .collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        let lr = T::lit(lr);
        for id in 0..model.params.len() {
            for idx in 0..model.params[id].len() {
                if !model.is_trainable(id, idx) {
                    continue;
                }
                let g = &grads.params[id][idx].data;
                let v = &mut self.velocity[id][idx];
                if g.len() != v.len() {
                    return Err(Error::Shape(format!(
                        "gradient size mismatch at layer {id}"
                    )));
                }
                let p = &mut model.params[id][idx].data;
                for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = self.momentum * *v - lr * g;
                    *p += *v;
                    if !p.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite parameter update at layer {id}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One momentum step on a flat slice; used where no model is involved.
pub fn sgd_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape("sgd operands differ in length".into()));
    }
    let (lr, m) = (T::lit(lr), T::lit(momentum));
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = m * *v - lr * g;
        *p += *v;
        if !p.is_finite() {
            return Err(Error::Numeric("non-finite parameter update".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let (mut p, mut v) = ([1.0f64], [0.0]);
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let (mut p, mut v) = ([0.3f32, -2.0], [0.0, 0.0]);
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9).unwrap();
        assert_eq!(p, [0.3, -2.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let (mut p, mut v) = ([1.0f64], [0.0]);
        for _ in 0..200 {
            let g = [2.0 * p[0]];
            sgd_step(&mut p, &g, &mut v, 0.1, 0.9).unwrap();
        }
        assert!(p[0].abs() < 1e-3, "{}", p[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut p, mut v) = ([1.0f32], [0.0]);
        assert!(sgd_step(&mut p, &[f32::MAX], &mut v, 1e10, 0.0).is_err());
    }
}
