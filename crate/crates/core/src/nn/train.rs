use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::optim::Sgd;
use super::schedule::ScheduleConfig;
use super::tensor::Tensor4;
use crate::augment::{FeatureAugment, LabeledBatch};
use crate::dsp::FeatureTensor;
use crate::rng::{derive_seed, derive_seed_index, seeded};
use crate::{Error, Result};

/// A training item: features plus a label distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureTensor,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    /// Model states captured at learning-rate minima.
    pub snapshots: Vec<Model<f32>>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Stack equally shaped feature tensors into an NHWC batch.
pub fn stack_batch(items: &[&FeatureTensor]) -> Result<Tensor4<f32>> {
    let first = items
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot stack an empty batch".into()))?;
    let (t, f, c) = first.dims();
    let mut data = Vec::with_capacity(items.len() * t * f * c);
    for it in items {
        if it.dims() != (t, f, c) {
            return Err(Error::Shape(format!(
                "batch mixes shapes {:?} and {:?}",
                (t, f, c),
                it.dims()
            )));
        }
        data.extend_from_slice(it.as_slice());
    }
    Tensor4::from_vec([items.len(), t, f, c], data)
}

/// Batch boundaries for `n` items; a trailing single item joins the previous
/// batch so that every batch has at least two items when `n ≥ 2`.
fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

/// Minibatch SGD with cosine restarts. Batch augmentations run in the given
/// order on every batch. Deterministic for a fixed seed.
pub fn train(
    mut model: Model<f32>,
    data: &[Example],
    cfg: &TrainConfig,
    augments: &[Box<dyn FeatureAugment>],
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let k = data[0].target.len();
    if data.iter().any(|e| e.target.len() != k) {
        return Err(Error::InvalidInput("targets differ in length".into()));
    }
    let ranges = batch_ranges(data.len(), cfg.batch_size);
    let sched = cfg.schedule.resolve(ranges.len())?;
    let total = cfg.epochs * ranges.len();
    let mut sgd = Sgd::new(&model, cfg.schedule.momentum);
    let mut snapshots = Vec::new();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let shuffle_seed = derive_seed(cfg.seed, "shuffle");
    let step_seed = derive_seed(cfg.seed, "step");
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seeded(derive_seed_index(shuffle_seed, epoch as u64)));
        let mut sum = 0.0;
        for r in &ranges {
            let mut rng = seeded(derive_seed_index(step_seed, step as u64));
            let idx = &order[r.clone()];
            let mut batch = LabeledBatch::new(
                idx.iter().map(|&i| data[i].features.clone()).collect(),
                idx.iter().map(|&i| data[i].target.clone()).collect(),
            )?;
            for aug in augments {
                aug.apply(&mut batch, &mut rng)?;
            }
            let refs: Vec<&FeatureTensor> = batch.tensors.iter().collect();
            let x = stack_batch(&refs)?;
            let targets: Vec<f32> = batch.labels.concat();
            let (loss, grads, trace) =
                model
                    .loss_and_grads(&x, &targets, &mut rng)
                    .map_err(|e| match e {
                        Error::Numeric(m) => {
                            Error::Numeric(format!("epoch {epoch}, step {step}: {m}"))
                        }
                        other => other,
                    })?;
            let lr = sched.lr(step);
            sgd.step(&mut model, &grads, lr)?;
            model.update_running_stats(&trace);
            sum += f64::from(loss);
            let last = step + 1 == total;
            if lr <= 2.0 * sched.lr_min && (last || sched.lr(step + 1) > lr) {
                snapshots.push(model.clone());
            }
            step += 1;
        }
        epoch_loss.push(sum / ranges.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        snapshots,
        epoch_loss,
        steps: step,
    })
}

/// Eval-mode class probabilities, one row per item. Items are batched in
/// order; batches whose items differ in shape run one item at a time.
pub fn predict_batched(
    model: &Model<f32>,
    items: &[FeatureTensor],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch_size.max(1)) {
        let refs: Vec<&FeatureTensor> = chunk.iter().collect();
        let groups: Vec<Vec<&FeatureTensor>> = if chunk.iter().all(|t| t.dims() == chunk[0].dims())
        {
            vec![refs]
        } else {
            refs.into_iter().map(|r| vec![r]).collect()
        };
        for g in groups {
            let y = model.predict(&stack_batch(&g)?)?;
            out.extend(y.rows().map(<[f32]>::to_vec));
        }
    }
    Ok(out)
}

/// Element-wise mean of several models' output probabilities.
pub fn snapshot_average(outputs: &[Vec<Vec<f32>>]) -> Result<Vec<Vec<f32>>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::InvalidInput("no snapshot outputs to average".into()))?;
    let shape: Vec<usize> = first.iter().map(Vec::len).collect();
    if outputs
        .iter()
        .any(|o| o.iter().map(Vec::len).collect::<Vec<_>>() != shape)
    {
        return Err(Error::Shape("snapshot outputs differ in shape".into()));
    }
    let n = outputs.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            (0..shape[i])
                .map(|j| (outputs.iter().map(|o| f64::from(o[i][j])).sum::<f64>() / n) as f32)
                .collect()
        })
        .collect())
}
