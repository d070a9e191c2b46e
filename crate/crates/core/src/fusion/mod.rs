//! Two-stage hierarchical score fusion and model ensembling.

mod ensemble;
mod hierarchy;

pub use ensemble::{
    average_ensemble, average_rows, ensemble_strategy, AverageEnsemble, EnsembleStrategy,
    LogisticEnsemble, ENSEMBLE_STRATEGIES,
};
pub use hierarchy::{ClassHierarchy, SCENE_CLASSES, SUPERCLASSES};

use crate::{Error, Result};

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `fused[q] = f1[parent(q)] · f2[q]`, left unnormalised, with the argmax.
pub fn two_stage_fuse(f1: &[f32], f2: &[f32], h: &ClassHierarchy) -> Result<(Vec<f32>, usize)> {
    if f1.len() != h.n_superclasses() || f2.len() != h.n_classes() {
        return Err(Error::Shape(format!(
            "expected {} and {} scores, got {} and {}",
            h.n_superclasses(),
            h.n_classes(),
            f1.len(),
            f2.len()
        )));
    }
    if f1.iter().chain(f2).any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput(
            "scores must be finite and non-negative".into(),
        ));
    }
    let fused: Vec<f32> = f2
        .iter()
        .enumerate()
        .map(|(q, &s)| f1[h.parent(q)] * s)
        .collect();
    let best = argmax(&fused);
    Ok((fused, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn idx(h: &ClassHierarchy, name: &str) -> usize {
        h.class_index(name).unwrap()
    }

    #[test]
    fn uniform_first_stage_keeps_flat_decision() {
        let h = ClassHierarchy::builtin();
        let mut rng = seeded(1);
        for _ in 0..100 {
            let f2: Vec<f32> = (0..10).map(|_| rng.random::<f32>()).collect();
            let (_, c) = two_stage_fuse(&[1. / 3.; 3], &f2, &h).unwrap();
            assert_eq!(c, argmax(&f2));
        }
    }

    #[test]
    fn zeroed_groups_are_excluded() {
        let h = ClassHierarchy::builtin();
        let mut f2 = vec![0.01f32; 10];
        f2[idx(&h, "park")] = 0.6;
        f2[idx(&h, "tram")] = 0.3;
        let transport = h.superclass_index("transportation").unwrap();
        let mut f1 = [0.0f32; 3];
        f1[transport] = 1.0;
        let (_, c) = two_stage_fuse(&f1, &f2, &h).unwrap();
        assert_eq!(h.classes()[c], "tram");
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let h = ClassHierarchy::builtin();
        let mut rng = seeded(2);
        for _ in 0..1000 {
            let f1: Vec<f32> = (0..3).map(|_| rng.random::<f32>()).collect();
            let f2: Vec<f32> = (0..10).map(|_| rng.random::<f32>()).collect();
            let mut best = (f32::MIN, 0);
            for p in 0..3 {
                for q in 0..10 {
                    if h.parent(q) == p && f1[p] * f2[q] > best.0 {
                        best = (f1[p] * f2[q], q);
                    }
                }
            }
            assert_eq!(two_stage_fuse(&f1, &f2, &h).unwrap().1, best.1);
        }
    }

    #[test]
    fn ties_take_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5, 0.1]), 1);
        let h = ClassHierarchy::builtin();
        let (_, c) = two_stage_fuse(&[1.0; 3], &[0.1; 10], &h).unwrap();
        assert_eq!(c, 0);
    }

    #[test]
    fn rejects_bad_scores() {
        let h = ClassHierarchy::builtin();
        assert!(two_stage_fuse(&[0.5, 0.5, -0.1], &[0.1; 10], &h).is_err());
        assert!(two_stage_fuse(&[0.5, 0.5], &[0.1; 10], &h).is_err());
    }
}
