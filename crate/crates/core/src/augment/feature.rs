use ndarray::{s, Array3};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use super::{FeatureAugment, LabeledBatch};
use crate::dsp::FeatureTensor;
use crate::rng::Rng;
use crate::{Error, Result};

/// Mix a batch with a shuffled copy of itself, `λ ~ Beta(α, α)`.
pub fn mixup_batch(batch: &LabeledBatch, alpha: f64, rng: &mut Rng) -> Result<LabeledBatch> {
    if batch.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "mixup needs at least 2 items, got {}",
            batch.len()
        )));
    }
    let beta =
        Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha {alpha}: {e}")))?;
    let lambda: f64 = beta.sample(rng);
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    perm.shuffle(rng);
    mixup_with_lambda(batch, lambda as f32, &perm)
}

/// `out[i] = λ·batch[i] + (1 − λ)·batch[perm[i]]` for tensors and labels.
pub fn mixup_with_lambda(
    batch: &LabeledBatch,
    lambda: f32,
    perm: &[usize],
) -> Result<LabeledBatch> {
    if perm.len() != batch.len() || perm.iter().any(|&p| p >= batch.len()) {
        return Err(Error::InvalidInput(
            "mixup permutation does not fit the batch".into(),
        ));
    }
    let dims = batch.tensors[0].dims();
    if batch.tensors.iter().any(|t| t.dims() != dims) {
        return Err(Error::Shape("mixup needs equally shaped tensors".into()));
    }
    let mu = 1.0 - lambda;
    let mut tensors = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for (i, &j) in perm.iter().enumerate() {
        let a = batch.tensors[i].data();
        let b = batch.tensors[j].data();
        let mixed = a * lambda + b * mu;
        tensors.push(FeatureTensor::new(mixed)?);
        labels.push(
            batch.labels[i]
                .iter()
                .zip(&batch.labels[j])
                .map(|(&x, &y)| lambda * x + mu * y)
                .collect(),
        );
    }
    Ok(LabeledBatch { tensors, labels })
}

pub fn random_crop(t: &FeatureTensor, crop_len: usize, rng: &mut Rng) -> Result<FeatureTensor> {
    let frames = t.frames();
    if crop_len == 0 || crop_len > frames {
        return Err(Error::InvalidInput(format!(
            "cannot crop {crop_len} frames from a {frames}-frame tensor"
        )));
    }
    let off = rng.random_range(0..=frames - crop_len);
    FeatureTensor::new(t.data().slice(s![off..off + crop_len, .., ..]).to_owned())
}

/// Exchange the left and right three-channel feature blocks when `swap`.
pub fn channel_confusion_with(t: &FeatureTensor, swap: bool) -> Result<FeatureTensor> {
    if t.channels() != 6 {
        return Err(Error::InvalidInput(format!(
            "channel confusion needs a 6-channel stereo stack, got {}",
            t.channels()
        )));
    }
    if !swap {
        return Ok(t.clone());
    }
    let d = t.data();
    let mut out = Array3::zeros(d.raw_dim());
    out.slice_mut(s![.., .., 0..3])
        .assign(&d.slice(s![.., .., 3..6]));
    out.slice_mut(s![.., .., 3..6])
        .assign(&d.slice(s![.., .., 0..3]));
    FeatureTensor::new(out)
}

pub fn channel_confusion(t: &FeatureTensor, rng: &mut Rng) -> Result<FeatureTensor> {
    let swap = rng.random_bool(0.5);
    channel_confusion_with(t, swap)
}

/// Mask width for a dimension of `n` cells, rounded half up.
pub fn mask_width(n: usize, frac: f64) -> usize {
    ((n as f64 * frac) + 0.5).floor() as usize
}

/// Zero one time band and one frequency band, shared across channels.
/// Returns the tensor and the `(time, freq)` mask offsets.
pub fn spec_augment(
    t: &FeatureTensor,
    time_frac: f64,
    freq_frac: f64,
    rng: &mut Rng,
) -> Result<(FeatureTensor, (usize, usize))> {
    let (frames, bins, _) = t.dims();
    if frames < 10 || bins < 10 {
        return Err(Error::InvalidInput(format!(
            "spec augment needs at least 10 frames and bins, got {frames}×{bins}"
        )));
    }
    let tw = mask_width(frames, time_frac);
    let fw = mask_width(bins, freq_frac);
    let t0 = rng.random_range(0..=frames - tw);
    let f0 = rng.random_range(0..=bins - fw);
    let mut out = t.data().clone();
    out.slice_mut(s![t0..t0 + tw, .., ..]).fill(0.0);
    out.slice_mut(s![.., f0..f0 + fw, ..]).fill(0.0);
    Ok((FeatureTensor::new(out)?, (t0, f0)))
}

#[derive(Debug, Clone, Copy)]
pub struct Mixup {
    pub alpha: f64,
}

impl FeatureAugment for Mixup {
    fn name(&self) -> &'static str {
        "mixup"
    }

    fn apply(&self, batch: &mut LabeledBatch, rng: &mut Rng) -> Result<()> {
        *batch = mixup_batch(batch, self.alpha, rng)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RandomCrop {
    pub crop_len: usize,
}

impl FeatureAugment for RandomCrop {
    fn name(&self) -> &'static str {
        "random_crop"
    }

    fn apply(&self, batch: &mut LabeledBatch, rng: &mut Rng) -> Result<()> {
        for t in &mut batch.tensors {
            *t = random_crop(t, self.crop_len, rng)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelConfusion;

impl FeatureAugment for ChannelConfusion {
    fn name(&self) -> &'static str {
        "channel_confusion"
    }

    fn apply(&self, batch: &mut LabeledBatch, rng: &mut Rng) -> Result<()> {
        for t in &mut batch.tensors {
            *t = channel_confusion(t, rng)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpecAugment {
    pub time_frac: f64,
    pub freq_frac: f64,
}

impl FeatureAugment for SpecAugment {
    fn name(&self) -> &'static str {
        "spec_augment"
    }

    fn apply(&self, batch: &mut LabeledBatch, rng: &mut Rng) -> Result<()> {
        for t in &mut batch.tensors {
            *t = spec_augment(t, self.time_frac, self.freq_frac, rng)?.0;
        }
        Ok(())
    }
}

/// Mean over the batch axis, used by tests of mean preservation.
#[cfg(test)]
fn batch_mean(b: &LabeledBatch) -> Array3<f32> {
    let views: Vec<_> = b.tensors.iter().map(|t| t.view()).collect();
    ndarray::stack(ndarray::Axis(0), &views)
        .unwrap()
        .mean_axis(ndarray::Axis(0))
        .unwrap()
}
