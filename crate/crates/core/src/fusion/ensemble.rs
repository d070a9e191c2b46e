use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Member outputs indexed `[member][item][class]`.
pub type MemberScores = [Vec<Vec<f32>>];

/// Combines the score matrices of several models into one.
pub trait EnsembleStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Learn combination parameters from labelled member outputs. Strategies
    /// without parameters ignore this.
    fn fit(&mut self, _members: &MemberScores, _labels: &[usize]) -> Result<()> {
        Ok(())
    }

    fn combine(&self, members: &MemberScores) -> Result<Vec<Vec<f32>>>;
}

pub const ENSEMBLE_STRATEGIES: &[&str] = &["average", "logistic"];

pub fn ensemble_strategy(name: &str) -> Result<Box<dyn EnsembleStrategy>> {
    Ok(match name {
        "average" => Box::new(AverageEnsemble),
        "logistic" => Box::new(LogisticEnsemble::default()),
        other => {
            return Err(Error::Config(format!(
                "unknown ensemble strategy {other:?}; expected one of {ENSEMBLE_STRATEGIES:?}"
            )))
        }
    })
}

/// Element-wise mean of score vectors.
pub fn average_ensemble(outputs: &[&[f32]]) -> Result<Vec<f32>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::InvalidInput("no outputs to average".into()))?;
    if outputs.iter().any(|o| o.len() != first.len()) {
        return Err(Error::Shape("outputs differ in length".into()));
    }
    let n = outputs.len() as f64;
    Ok((0..first.len())
        .map(|j| (outputs.iter().map(|o| f64::from(o[j])).sum::<f64>() / n) as f32)
        .collect())
}

fn check_members(members: &MemberScores) -> Result<(usize, usize)> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidInput("ensemble needs at least one member".into()))?;
    let items = first.len();
    let k = first.first().map_or(0, Vec::len);
    for m in members {
        if m.len() != items || m.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ensemble members disagree in shape".into()));
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite member score".into()));
        }
    }
    Ok((items, k))
}

/// Row-wise [`average_ensemble`] over members.
pub fn average_rows(members: &MemberScores) -> Result<Vec<Vec<f32>>> {
    let (items, _) = check_members(members)?;
    (0..items)
        .map(|i| {
            let rows: Vec<&[f32]> = members.iter().map(|m| m[i].as_slice()).collect();
            average_ensemble(&rows)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AverageEnsemble;

impl EnsembleStrategy for AverageEnsemble {
    fn name(&self) -> &'static str {
        "average"
    }

    fn combine(&self, members: &MemberScores) -> Result<Vec<Vec<f32>>> {
        average_rows(members)
    }
}

/// Multinomial logistic regression on the concatenated member scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticEnsemble {
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// `inputs × classes`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub classes: usize,
    /// Iterations used by the last fit.
    pub iterations: usize,
}

impl Default for LogisticEnsemble {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tol: 1e-5,
            max_iter: 10_000,
            weights: Vec::new(),
            bias: Vec::new(),
            inputs: 0,
            classes: 0,
            iterations: 0,
        }
    }
}

fn design(members: &MemberScores, items: usize) -> Vec<Vec<f64>> {
    (0..items)
        .map(|i| {
            members
                .iter()
                .flat_map(|m| m[i].iter().map(|&v| f64::from(v)))
                .collect()
        })
        .collect()
}

fn softmax_row(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

impl LogisticEnsemble {
    /// Zero-initialised model for `inputs` features and `classes` outputs.
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self {
            weights: vec![0.0; inputs * classes],
            bias: vec![0.0; classes],
            inputs,
            classes,
            ..Default::default()
        }
    }

    fn probs(&self, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        for (d, &xv) in x.iter().enumerate() {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += xv * w[d * self.classes + k];
            }
        }
        softmax_row(&mut z);
        z
    }

    /// Penalised mean cross-entropy and its gradient `(dW, db)`.
    fn objective(
        &self,
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        b: &[f64],
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let n = x.len() as f64;
        let mut loss = 0.0;
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; b.len()];
        for (xi, &yi) in x.iter().zip(y) {
            let mut p = self.probs(xi, w, b);
            loss -= p[yi].max(1e-300).ln();
            p[yi] -= 1.0;
            for (d, &xv) in xi.iter().enumerate() {
                for k in 0..self.classes {
                    gw[d * self.classes + k] += xv * p[k];
                }
            }
            for k in 0..self.classes {
                gb[k] += p[k];
            }
        }
        loss /= n;
        gw.iter_mut()
            .zip(w)
            .for_each(|(g, &wv)| *g = *g / n + self.l2 * wv);
        gb.iter_mut().for_each(|g| *g /= n);
        loss += 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        (loss, gw, gb)
    }
}

impl EnsembleStrategy for LogisticEnsemble {
    fn name(&self) -> &'static str {
        "logistic"
    }

    /// Full-batch gradient descent with backtracking line search until the
    /// gradient norm drops below `tol` or `max_iter` is reached.
    fn fit(&mut self, members: &MemberScores, labels: &[usize]) -> Result<()> {
        let (items, k) = check_members(members)?;
        if labels.len() != items {
            return Err(Error::InvalidInput(format!(
                "{} labels for {items} items",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l >= k) {
            return Err(Error::InvalidInput(format!("label outside 0..{k}")));
        }
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(Error::InvalidInput(
                "logistic ensemble needs at least two classes".into(),
            ));
        }
        if counts.contains(&1) {
            return Err(Error::InvalidInput(
                "every present class needs at least two items".into(),
            ));
        }
        let x = design(members, items);
        *self = Self {
            l2: self.l2,
            tol: self.tol,
            max_iter: self.max_iter,
            ..Self::zeros(members.len() * k, k)
        };
        let (mut w, mut b) = (self.weights.clone(), self.bias.clone());
        let (mut loss, mut gw, mut gb) = self.objective(&x, labels, &w, &b);
        let mut step = 1.0;
        let mut it = 0;
        while it < self.max_iter {
            let gnorm2: f64 = gw.iter().chain(&gb).map(|g| g * g).sum();
            if gnorm2.sqrt() < self.tol {
                break;
            }
            loop {
                let w2: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
                let b2: Vec<f64> = b.iter().zip(&gb).map(|(a, g)| a - step * g).collect();
                let (l2, gw2, gb2) = self.objective(&x, labels, &w2, &b2);
                if l2 <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                    (w, b, loss, gw, gb) = (w2, b2, l2, gw2, gb2);
                    step = (step * 2.0).min(1e6);
                    break;
                }
                step *= 0.5;
            }
            it += 1;
        }
        if !loss.is_finite() {
            return Err(Error::Numeric("logistic ensemble diverged".into()));
        }
        self.weights = w;
        self.bias = b;
        self.iterations = it;
        Ok(())
    }

    fn combine(&self, members: &MemberScores) -> Result<Vec<Vec<f32>>> {
        let (items, k) = check_members(members)?;
        if members.len() * k != self.inputs || self.classes == 0 {
            return Err(Error::Shape(format!(
                "logistic ensemble expects {} inputs, got {}",
                self.inputs,
                members.len() * k
            )));
        }
        Ok(design(members, items)
            .iter()
            .map(|x| {
                self.probs(x, &self.weights, &self.bias)
                    .into_iter()
                    .map(|v| v as f32)
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::argmax;
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn accuracy(scores: &[Vec<f32>], labels: &[usize]) -> f64 {
        let hits = scores
            .iter()
            .zip(labels)
            .filter(|(s, &l)| argmax(s) == l)
            .count();
        hits as f64 / labels.len() as f64
    }

    #[test]
    fn average_examples() {
        let a = [1.0f32, 0.0];
        let b = [0.0f32, 1.0];
        assert_eq!(average_ensemble(&[&a, &b]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(average_ensemble(&[&a, &a]).unwrap(), a.to_vec());
        assert_eq!(
            average_ensemble(&[&a, &b]).unwrap(),
            average_ensemble(&[&b, &a]).unwrap()
        );
        assert!(average_ensemble(&[]).is_err());
        assert!(average_ensemble(&[&a, &[1.0][..]]).is_err());
    }

    #[test]
    fn zero_weights_give_uniform() {
        let e = LogisticEnsemble::zeros(6, 3);
        let members = vec![vec![vec![0.2, 0.3, 0.5]], vec![vec![0.9, 0.05, 0.05]]];
        let out = e.combine(&members).unwrap();
        assert!(out[0].iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-7));
    }

    #[test]
    fn perfect_members_fit_perfectly() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m: Vec<Vec<f32>> = labels
            .iter()
            .map(|&l| (0..3).map(|k| if k == l { 0.9 } else { 0.05 }).collect())
            .collect();
        let members = vec![m.clone(), m];
        let mut e = LogisticEnsemble::default();
        e.fit(&members, &labels).unwrap();
        assert_eq!(accuracy(&e.combine(&members).unwrap(), &labels), 1.0);
    }

    #[test]
    fn beats_best_member_on_toy_data() {
        let mut rng = seeded(3);
        let n = 300;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        // Member A is right 70% of the time, member B 60%, with
        // independent errors.
        let noisy = |rng: &mut crate::rng::Rng, l: usize, p: f64| -> Vec<f32> {
            let c = if rng.random_bool(p) {
                l
            } else {
                (l + rng.random_range(1..3)) % 3
            };
            let mut v: Vec<f32> = (0..3).map(|_| rng.random_range(0.0..0.2)).collect();
            v[c] += 0.6;
            let s: f32 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let a: Vec<Vec<f32>> = labels.iter().map(|&l| noisy(&mut rng, l, 0.7)).collect();
        let b: Vec<Vec<f32>> = labels.iter().map(|&l| noisy(&mut rng, l, 0.6)).collect();
        let best = accuracy(&a, &labels).max(accuracy(&b, &labels));
        let members = vec![a, b];
        let mut e = LogisticEnsemble {
            l2: 1e-8,
            ..Default::default()
        };
        e.fit(&members, &labels).unwrap();
        let fused = e.combine(&members).unwrap();
        assert!(accuracy(&fused, &labels) >= best);
        for row in &fused {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn degenerate_labels_rejected() {
        let members = vec![vec![vec![0.5f32, 0.5]; 4]];
        let mut e = LogisticEnsemble::default();
        assert!(e.fit(&members, &[0, 0, 0, 0]).is_err());
        assert!(e.fit(&members, &[0, 0, 0, 1]).is_err());
        assert!(e.fit(&members, &[0, 0, 1, 1]).is_ok());
        let bad = vec![vec![vec![f32::NAN, 0.5]; 4]];
        assert!(e.fit(&bad, &[0, 0, 1, 1]).is_err());
    }

    #[test]
    fn registry() {
        for n in ENSEMBLE_STRATEGIES {
            assert_eq!(ensemble_strategy(n).unwrap().name(), *n);
        }
        assert!(ensemble_strategy("stacking").is_err());
    }
}
