use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::WaveAugment;
use crate::dsp::{istft, stft, AudioClip, StftParams};
use crate::rng::Rng;
use crate::{Error, Result};

/// Floor applied to the target-device profile before dividing by it.
pub const PROFILE_FLOOR: f64 = 1e-8;

/// Mean magnitude spectra per device, and the reference spectrum averaged
/// over every device except the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfiles {
    pub n_fft: usize,
    pub hop: usize,
    pub target_device: String,
    pub devices: BTreeMap<String, Vec<f64>>,
    pub reference: Vec<f64>,
}

impl SpectrumProfiles {
    pub fn params(&self) -> StftParams {
        StftParams::new(self.n_fft, self.hop)
    }

    /// Per-bin gain `reference / max(target, floor)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let target = &self.devices[&self.target_device];
        self.reference
            .iter()
            .zip(target)
            .map(|(&r, &t)| r / t.max(PROFILE_FLOOR))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profiles serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Format {
            format: "spectrum profiles",
            reason: e.to_string(),
        })?;
        if !p.devices.contains_key(&p.target_device) || p.reference.len() != p.n_fft / 2 + 1 {
            return Err(Error::Format {
                format: "spectrum profiles",
                reason: "inconsistent profile set".into(),
            });
        }
        Ok(p)
    }
}

/// Average `|STFT|` per device over all clips, channels and frames.
pub fn fit_spectrum_profiles<'a, I>(
    clips: I,
    target_device: &str,
    n_fft: usize,
) -> Result<SpectrumProfiles>
where
    I: IntoIterator<Item = (&'a str, &'a AudioClip)>,
{
    let p = StftParams::new(n_fft, n_fft / 4);
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (device, clip) in clips {
        let entry = sums
            .entry(device.to_string())
            .or_insert_with(|| (vec![0.0; p.n_bins()], 0));
        for ch in clip.channels() {
            let x: Vec<f64> = ch.iter().map(|&v| f64::from(v)).collect();
            for frame in stft(&x, &p)? {
                for (s, c) in entry.0.iter_mut().zip(&frame) {
                    *s += c.norm();
                }
                entry.1 += 1;
            }
        }
    }
    if !sums.contains_key(target_device) {
        return Err(Error::InvalidInput(format!(
            "no clips from target device {target_device:?}"
        )));
    }
    let devices: BTreeMap<String, Vec<f64>> = sums
        .into_iter()
        .map(|(d, (s, n))| (d, s.into_iter().map(|v| v / n as f64).collect()))
        .collect();
    let others: Vec<&Vec<f64>> = devices
        .iter()
        .filter(|(d, _)| d.as_str() != target_device)
        .map(|(_, v)| v)
        .collect();
    if others.is_empty() {
        return Err(Error::InvalidInput(
            "spectrum correction needs at least one device besides the target".into(),
        ));
    }
    let reference = (0..p.n_bins())
        .map(|k| others.iter().map(|v| v[k]).sum::<f64>() / others.len() as f64)
        .collect();
    Ok(SpectrumProfiles {
        n_fft,
        hop: p.hop,
        target_device: target_device.to_string(),
        devices,
        reference,
    })
}

/// Scale every STFT bin of `clip` by the device correction gain, keeping
/// phase, and resynthesise.
pub fn spectrum_correct(clip: &AudioClip, profiles: &SpectrumProfiles) -> Result<AudioClip> {
    let p = profiles.params();
    let gain = profiles.coefficients();
    let channels = clip
        .channels()
        .iter()
        .map(|ch| {
            let x: Vec<f64> = ch.iter().map(|&v| f64::from(v)).collect();
            let mut frames = stft(&x, &p)?;
            for f in &mut frames {
                for (c, &g) in f.iter_mut().zip(&gain) {
                    *c *= g;
                }
            }
            Ok(istft(&frames, &p, x.len())
                .into_iter()
                .map(|v| v as f32)
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    AudioClip::new(channels, clip.sample_rate())
}

#[derive(Debug, Clone)]
pub struct SpectrumCorrection {
    profiles: SpectrumProfiles,
}

impl SpectrumCorrection {
    pub fn new(profiles: SpectrumProfiles) -> Self {
        Self { profiles }
    }
}

impl WaveAugment for SpectrumCorrection {
    fn name(&self) -> &'static str {
        "spectrum_correction"
    }

    fn apply(&self, clip: &AudioClip, _: Option<&AudioClip>, _: &mut Rng) -> Result<AudioClip> {
        spectrum_correct(clip, &self.profiles)
    }

    fn describe(&self) -> String {
        format!(
            "target={};n_fft={}",
            self.profiles.target_device, self.profiles.n_fft
        )
    }
}
