use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use super::WaveAugment;
use crate::dsp::{istft, stft, AudioClip, StftParams};
use crate::rng::Rng;
use crate::{Error, Result};

/// Phase-vocoder analysis parameters.
const PV_NFFT: usize = 1024;
const PV_HOP: usize = 256;

/// Read `x` at positions `i·ratio` for `i in 0..out_len` by linear
/// interpolation, holding the last sample past the end.
pub fn resample_linear(x: &[f32], ratio: f64, out_len: usize) -> Vec<f32> {
    if x.is_empty() {
        return vec![0.0; out_len];
    }
    let last = x.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = pos.floor() as usize;
            if i0 >= last {
                return x[last];
            }
            let a = pos - i0 as f64;
            if a == 0.0 {
                x[i0]
            } else {
                ((1.0 - a) * f64::from(x[i0]) + a * f64::from(x[i0 + 1])) as f32
            }
        })
        .collect()
}

/// Phase-vocoder time stretch. `rate > 1` shortens; output has
/// `round(len / rate)` samples.
pub fn time_stretch(x: &[f32], rate: f64) -> Result<Vec<f32>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "stretch rate {rate} must be positive"
        )));
    }
    let p = StftParams::new(PV_NFFT, PV_HOP);
    let xd: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
    let frames = stft(&xd, &p)?;
    let n_bins = p.n_bins();
    let zero = vec![Complex64::default(); n_bins];
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * k as f64 * PV_HOP as f64 / PV_NFFT as f64)
        .collect();
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let mut out = Vec::new();
    let mut step = 0.0f64;
    while step < frames.len() as f64 {
        let i = step.floor() as usize;
        let a = step - i as f64;
        let c0 = &frames[i];
        let c1 = frames.get(i + 1).unwrap_or(&zero);
        let mut col = Vec::with_capacity(n_bins);
        for k in 0..n_bins {
            let mag = (1.0 - a) * c0[k].norm() + a * c1[k].norm();
            col.push(Complex64::from_polar(mag, phase[k]));
            let mut d = c1[k].arg() - c0[k].arg() - advance[k];
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            phase[k] += advance[k] + d;
        }
        out.push(col);
        step += rate;
    }
    let len = (x.len() as f64 / rate).round() as usize;
    Ok(istft(&out, &p, len).into_iter().map(|v| v as f32).collect())
}

/// Shift pitch by `semitones` keeping the length: stretch by
/// `2^(s/12)` then resample back.
pub fn pitch_shift_by(clip: &AudioClip, semitones: f64) -> Result<AudioClip> {
    let factor = 2f64.powf(semitones / 12.0);
    let len = clip.len();
    let channels = clip
        .channels()
        .iter()
        .map(|ch| {
            let stretched = time_stretch(ch, 1.0 / factor)?;
            Ok(resample_linear(&stretched, factor, len))
        })
        .collect::<Result<Vec<_>>>()?;
    AudioClip::new(channels, clip.sample_rate())
}

pub fn pitch_shift(
    clip: &AudioClip,
    semitone_range: f64,
    rng: &mut Rng,
) -> Result<(AudioClip, f64)> {
    let s = if semitone_range > 0.0 {
        rng.random_range(-semitone_range..=semitone_range)
    } else {
        0.0
    };
    Ok((pitch_shift_by(clip, s)?, s))
}

/// Play back at `ratio` times the speed, then cut or zero-pad the tail to the
/// original length.
pub fn speed_change_by(clip: &AudioClip, ratio: f64) -> Result<AudioClip> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "speed ratio {ratio} must be positive"
        )));
    }
    let len = clip.len();
    let new_len = (len as f64 / ratio).round() as usize;
    clip.map_channels(|ch| {
        let mut y = resample_linear(ch, ratio, new_len);
        y.resize(len, 0.0);
        y
    })
}

pub fn speed_change(
    clip: &AudioClip,
    range: (f64, f64),
    rng: &mut Rng,
) -> Result<(AudioClip, f64)> {
    let r = if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    };
    Ok((speed_change_by(clip, r)?, r))
}

pub fn add_noise(clip: &AudioClip, std: f64, rng: &mut Rng) -> Result<AudioClip> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise std {std} must be non-negative"
        )));
    }
    if std == 0.0 {
        return Ok(clip.clone());
    }
    let normal = Normal::new(0.0, std).expect("valid std");
    clip.map_channels(|ch| {
        ch.iter()
            .map(|&s| (f64::from(s) + normal.sample(rng)) as f32)
            .collect()
    })
}

pub fn mix_with_weight(a: &AudioClip, b: &AudioClip, w: f32) -> Result<AudioClip> {
    if a.len() != b.len() || a.sample_rate() != b.sample_rate() || a.n_channels() != b.n_channels()
    {
        return Err(Error::InvalidInput(format!(
            "cannot mix clips of {}×{} @ {} Hz and {}×{} @ {} Hz",
            a.n_channels(),
            a.len(),
            a.sample_rate(),
            b.n_channels(),
            b.len(),
            b.sample_rate()
        )));
    }
    let channels = a
        .channels()
        .iter()
        .zip(b.channels())
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| w * p + (1.0 - w) * q)
                .collect()
        })
        .collect();
    AudioClip::new(channels, a.sample_rate())
}

pub fn mix_same_class(
    a: &AudioClip,
    b: &AudioClip,
    weight_range: (f64, f64),
    rng: &mut Rng,
) -> Result<(AudioClip, f64)> {
    let w = if weight_range.1 > weight_range.0 {
        rng.random_range(weight_range.0..=weight_range.1)
    } else {
        weight_range.0
    };
    Ok((mix_with_weight(a, b, w as f32)?, w))
}

#[derive(Debug, Clone, Copy)]
pub struct PitchShift {
    pub semitone_range: f64,
}

impl WaveAugment for PitchShift {
    fn name(&self) -> &'static str {
        "pitch_shift"
    }

    fn apply(&self, clip: &AudioClip, _: Option<&AudioClip>, rng: &mut Rng) -> Result<AudioClip> {
        Ok(pitch_shift(clip, self.semitone_range, rng)?.0)
    }

    fn describe(&self) -> String {
        format!("semitones=±{}", self.semitone_range)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpeedChange {
    pub range: (f64, f64),
}

impl WaveAugment for SpeedChange {
    fn name(&self) -> &'static str {
        "speed_change"
    }

    fn apply(&self, clip: &AudioClip, _: Option<&AudioClip>, rng: &mut Rng) -> Result<AudioClip> {
        Ok(speed_change(clip, self.range, rng)?.0)
    }

    fn describe(&self) -> String {
        format!("ratio=[{},{}]", self.range.0, self.range.1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AddNoise {
    pub std: f64,
}

impl WaveAugment for AddNoise {
    fn name(&self) -> &'static str {
        "add_noise"
    }

    fn apply(&self, clip: &AudioClip, _: Option<&AudioClip>, rng: &mut Rng) -> Result<AudioClip> {
        add_noise(clip, self.std, rng)
    }

    fn describe(&self) -> String {
        format!("std={}", self.std)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MixSameClass {
    pub weight_range: (f64, f64),
}

impl WaveAugment for MixSameClass {
    fn name(&self) -> &'static str {
        "mix_same_class"
    }

    fn needs_partner(&self) -> bool {
        true
    }

    fn apply(
        &self,
        clip: &AudioClip,
        partner: Option<&AudioClip>,
        rng: &mut Rng,
    ) -> Result<AudioClip> {
        let b = partner
            .ok_or_else(|| Error::InvalidInput("mix_same_class needs a partner clip".into()))?;
        Ok(mix_same_class(clip, b, self.weight_range, rng)?.0)
    }

    fn describe(&self) -> String {
        format!("weight=[{},{}]", self.weight_range.0, self.weight_range.1)
    }
}
