//! Data augmentation over waveforms and feature tensors.
//!
//! Waveform strategies implement [`WaveAugment`] and feature-level ones
//! implement [`FeatureAugment`]; both are looked up by name through
//! [`wave_augment`] and [`feature_augment`]. Every transform draws its
//! randomness from the caller's rng, so a fixed seed gives bit-identical
//! output.

mod corpus;
mod feature;
mod reverb;
mod spectrum;
mod wave;

use serde::{Deserialize, Serialize};

pub use corpus::{read_provenance, write_provenance, ProvenanceRecord};
pub use feature::{
    channel_confusion, channel_confusion_with, mask_width, mixup_batch, mixup_with_lambda,
    random_crop, spec_augment, ChannelConfusion, Mixup, RandomCrop, SpecAugment,
};
pub use reverb::{apply_with_rir, reverb_drc, synthetic_rir, Compressor, ReverbDrc};
pub use spectrum::{fit_spectrum_profiles, spectrum_correct, SpectrumCorrection, SpectrumProfiles};
pub use wave::{
    add_noise, mix_same_class, mix_with_weight, pitch_shift, pitch_shift_by, resample_linear,
    speed_change, speed_change_by, time_stretch, AddNoise, MixSameClass, PitchShift, SpeedChange,
};

use crate::dsp::{AudioClip, FeatureTensor};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub mixup_alpha: f64,
    pub crop_len: usize,
    pub specaug_time_frac: f64,
    pub specaug_freq_frac: f64,
    /// Pitch shifts are drawn uniformly from `±pitch_semitone_range`.
    pub pitch_semitone_range: f64,
    pub speed_range: (f64, f64),
    pub noise_std: f64,
    pub mix_weight_range: (f64, f64),
    pub rt60_range: (f64, f64),
    /// Devices whose clips receive waveform augmentation; empty means all.
    pub wave_devices: Vec<String>,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mixup_alpha: 0.4,
            crop_len: 400,
            specaug_time_frac: 0.10,
            specaug_freq_frac: 0.10,
            pitch_semitone_range: 2.0,
            speed_range: (0.9, 1.1),
            noise_std: 0.003,
            mix_weight_range: (0.4, 0.6),
            rt60_range: (0.1, 0.6),
            wave_devices: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return bad(format!(
                "mixup_alpha must be positive, got {}",
                self.mixup_alpha
            ));
        }
        if self.crop_len == 0 {
            return bad("crop_len must be at least 1".into());
        }
        for (name, f) in [
            ("specaug_time_frac", self.specaug_time_frac),
            ("specaug_freq_frac", self.specaug_freq_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {f}"));
            }
        }
        if !(self.pitch_semitone_range >= 0.0 && self.pitch_semitone_range.is_finite()) {
            return bad("pitch_semitone_range must be non-negative".into());
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && lo <= hi && hi <= 2.0) {
            return bad(format!("speed_range ({lo}, {hi}) must lie within (0, 2]"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative".into());
        }
        let (lo, hi) = self.mix_weight_range;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return bad(format!(
                "mix_weight_range ({lo}, {hi}) must lie within [0, 1]"
            ));
        }
        let (lo, hi) = self.rt60_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("rt60_range ({lo}, {hi}) must be positive"));
        }
        Ok(())
    }

    /// Whether waveform augmentation applies to clips from `device`.
    pub fn wave_applies_to(&self, device: &str) -> bool {
        self.wave_devices.is_empty() || self.wave_devices.iter().any(|d| d == device)
    }
}

/// Feature tensors of equal shape with one label distribution per item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub tensors: Vec<FeatureTensor>,
    pub labels: Vec<Vec<f32>>,
}

impl LabeledBatch {
    pub fn new(tensors: Vec<FeatureTensor>, labels: Vec<Vec<f32>>) -> Result<Self> {
        if tensors.is_empty() || tensors.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "batch needs matching non-empty tensors and labels (got {} and {})",
                tensors.len(),
                labels.len()
            )));
        }
        let k = labels[0].len();
        for row in &labels {
            let s: f32 = row.iter().sum();
            if row.len() != k || (s - 1.0).abs() > 1e-5 {
                return Err(Error::InvalidInput(
                    "label rows must be distributions of equal length".into(),
                ));
            }
        }
        Ok(Self { tensors, labels })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// A waveform transform. Strategies that need a second clip of the same
/// class report it through [`WaveAugment::needs_partner`].
pub trait WaveAugment: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_partner(&self) -> bool {
        false
    }

    fn apply(
        &self,
        clip: &AudioClip,
        partner: Option<&AudioClip>,
        rng: &mut Rng,
    ) -> Result<AudioClip>;

    /// Parameters recorded in the provenance manifest.
    fn describe(&self) -> String;
}

/// A feature-level transform applied to a whole batch.
pub trait FeatureAugment: Send + Sync {
    fn name(&self) -> &'static str;

    fn apply(&self, batch: &mut LabeledBatch, rng: &mut Rng) -> Result<()>;
}

pub const WAVE_AUGMENTS: &[&str] = &[
    "spectrum_correction",
    "reverb_drc",
    "pitch_shift",
    "speed_change",
    "add_noise",
    "mix_same_class",
];

pub const FEATURE_AUGMENTS: &[&str] =
    &["mixup", "random_crop", "channel_confusion", "spec_augment"];

/// Look up a waveform strategy. `spectrum_correction` needs fitted profiles.
pub fn wave_augment(
    name: &str,
    cfg: &AugmentConfig,
    profiles: Option<&SpectrumProfiles>,
) -> Result<Box<dyn WaveAugment>> {
    Ok(match name {
        "spectrum_correction" => {
            let p = profiles.ok_or_else(|| {
                Error::Config("spectrum_correction requires device spectrum profiles".into())
            })?;
            Box::new(SpectrumCorrection::new(p.clone()))
        }
        "reverb_drc" => Box::new(ReverbDrc::new(cfg.rt60_range, Compressor::default())),
        "pitch_shift" => Box::new(PitchShift {
            semitone_range: cfg.pitch_semitone_range,
        }),
        "speed_change" => Box::new(SpeedChange {
            range: cfg.speed_range,
        }),
        "add_noise" => Box::new(AddNoise { std: cfg.noise_std }),
        "mix_same_class" => Box::new(MixSameClass {
            weight_range: cfg.mix_weight_range,
        }),
        other => {
            return Err(Error::Config(format!(
                "unknown waveform augmentation {other:?}; expected one of {WAVE_AUGMENTS:?}"
            )))
        }
    })
}

pub fn feature_augment(name: &str, cfg: &AugmentConfig) -> Result<Box<dyn FeatureAugment>> {
    Ok(match name {
        "mixup" => Box::new(Mixup {
            alpha: cfg.mixup_alpha,
        }),
        "random_crop" => Box::new(RandomCrop {
            crop_len: cfg.crop_len,
        }),
        "channel_confusion" => Box::new(ChannelConfusion),
        "spec_augment" => Box::new(SpecAugment {
            time_frac: cfg.specaug_time_frac,
            freq_frac: cfg.specaug_freq_frac,
        }),
        other => {
            return Err(Error::Config(format!(
                "unknown feature augmentation {other:?}; expected one of {FEATURE_AUGMENTS:?}"
            )))
        }
    })
}
