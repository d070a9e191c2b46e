use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::WaveAugment;
use crate::dsp::AudioClip;
use crate::rng::Rng;
use crate::{Error, Result};

/// Feed-forward compressor with attack/release smoothing of the gain in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compressor {
    pub threshold_db: f64,
    /// May be `f64::INFINITY` for a limiter.
    pub ratio: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub makeup_db: f64,
}

impl Default for Compressor {
    fn default() -> Self {
        Self {
            threshold_db: -20.0,
            ratio: 4.0,
            attack_ms: 5.0,
            release_ms: 100.0,
            makeup_db: 0.0,
        }
    }
}

fn smoothing(ms: f64, sample_rate: u32) -> f64 {
    if ms <= 0.0 {
        0.0
    } else {
        (-1000.0 / (ms * f64::from(sample_rate))).exp()
    }
}

impl Compressor {
    pub fn process(&self, x: &[f32], sample_rate: u32) -> Vec<f32> {
        let attack = smoothing(self.attack_ms, sample_rate);
        let release = smoothing(self.release_ms, sample_rate);
        let slope = 1.0 - 1.0 / self.ratio;
        let mut gain_db = 0.0f64;
        x.iter()
            .map(|&s| {
                let level = 20.0 * f64::from(s.abs()).max(1e-10).log10();
                let over = level - self.threshold_db;
                let target = if over > 0.0 { -over * slope } else { 0.0 };
                let c = if target < gain_db { attack } else { release };
                gain_db = c * gain_db + (1.0 - c) * target;
                (f64::from(s) * 10f64.powf((gain_db + self.makeup_db) / 20.0)) as f32
            })
            .collect()
    }
}

/// Exponentially decaying white-noise impulse response with a unit direct
/// path; the tail falls by 60 dB after `rt60` seconds.
pub fn synthetic_rir(rt60: f64, sample_rate: u32, rng: &mut Rng) -> Vec<f32> {
    let n = ((rt60 * f64::from(sample_rate)).ceil() as usize).max(1);
    let decay = 6.9078 / (rt60 * f64::from(sample_rate));
    let mut rir: Vec<f32> = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            (0.1 * z * (-decay * i as f64).exp()) as f32
        })
        .collect();
    rir[0] = 1.0;
    rir
}

/// Linear convolution truncated to `x.len()` samples.
fn convolve_truncated(x: &[f32], h: &[f32]) -> Vec<f32> {
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |v: &[f32]| {
        let mut b = vec![Complex64::default(); n];
        for (o, &s) in b.iter_mut().zip(v) {
            o.re = f64::from(s);
        }
        b
    };
    let mut a = lift(x);
    let mut b = lift(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..x.len()]
        .iter()
        .map(|c| (c.re / n as f64) as f32)
        .collect()
}

/// Convolve with `rir`, compress, and restore the original peak level.
pub fn apply_with_rir(clip: &AudioClip, rir: &[f32], comp: &Compressor) -> Result<AudioClip> {
    if rir.is_empty() {
        return Err(Error::InvalidInput("empty impulse response".into()));
    }
    let sr = clip.sample_rate();
    let wet = clip.map_channels(|ch| comp.process(&convolve_truncated(ch, rir), sr))?;
    let (p0, p1) = (clip.peak(), wet.peak());
    if p1 == 0.0 || p0 == p1 {
        return Ok(wet);
    }
    let g = p0 / p1;
    wet.map_channels(|ch| ch.iter().map(|&s| s * g).collect())
}

pub fn reverb_drc(
    clip: &AudioClip,
    rt60_range: (f64, f64),
    comp: &Compressor,
    rng: &mut Rng,
) -> Result<(AudioClip, f64)> {
    let rt60 = if rt60_range.1 > rt60_range.0 {
        rng.random_range(rt60_range.0..=rt60_range.1)
    } else {
        rt60_range.0
    };
    let rir = synthetic_rir(rt60, clip.sample_rate(), rng);
    Ok((apply_with_rir(clip, &rir, comp)?, rt60))
}

#[derive(Debug, Clone, Copy)]
pub struct ReverbDrc {
    pub rt60_range: (f64, f64),
    pub compressor: Compressor,
}

impl ReverbDrc {
    pub fn new(rt60_range: (f64, f64), compressor: Compressor) -> Self {
        Self {
            rt60_range,
            compressor,
        }
    }
}

impl WaveAugment for ReverbDrc {
    fn name(&self) -> &'static str {
        "reverb_drc"
    }

    fn apply(&self, clip: &AudioClip, _: Option<&AudioClip>, rng: &mut Rng) -> Result<AudioClip> {
        Ok(reverb_drc(clip, self.rt60_range, &self.compressor, rng)?.0)
    }

    fn describe(&self) -> String {
        let c = &self.compressor;
        format!(
            "rt60=[{},{}];threshold_db={};ratio={};attack_ms={};release_ms={}",
            self.rt60_range.0,
            self.rt60_range.1,
            c.threshold_db,
            c.ratio,
            c.attack_ms,
            c.release_ms
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn noise(n: usize, seed: u64) -> AudioClip {
        let mut rng = seeded(seed);
        let x = (0..n)
            .map(|_| (0.05 * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect();
        AudioClip::mono(x, 16000).unwrap()
    }

    #[test]
    fn delta_rir_below_threshold_is_identity() {
        let clip = noise(8000, 1);
        let comp = Compressor {
            threshold_db: 20.0,
            ..Default::default()
        };
        let y = apply_with_rir(&clip, &[1.0], &comp).unwrap();
        for (a, b) in y.channel(0).iter().zip(clip.channel(0)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let x = [1.0f32, 2.0, -1.0, 0.5];
        let h = [0.5f32, 0.25, 0.125];
        let y = convolve_truncated(&x, &h);
        let direct = [0.5, 1.25, 0.125, 0.25];
        for (a, b) in y.iter().zip(direct) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn acf_tail(x: &[f32]) -> f64 {
        let e: f64 = x.iter().map(|&v| f64::from(v).powi(2)).sum();
        (50..200)
            .map(|lag| {
                let s: f64 = x
                    .iter()
                    .zip(&x[lag..])
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                (s / e).abs()
            })
            .sum::<f64>()
            / 150.0
    }

    #[test]
    fn long_reverb_slows_autocorrelation_decay() {
        let clip = noise(32000, 2);
        let mut rng = seeded(3);
        let rir = synthetic_rir(0.6, 16000, &mut rng);
        let comp = Compressor {
            threshold_db: 20.0,
            ..Default::default()
        };
        let y = apply_with_rir(&clip, &rir, &comp).unwrap();
        assert!(acf_tail(y.channel(0)) > 2.0 * acf_tail(clip.channel(0)));
    }

    #[test]
    fn limiter_envelope_stays_under_threshold() {
        let mut rng = seeded(4);
        let x: Vec<f32> = (0..16000)
            .map(|i| {
                let env = if (i / 2000) % 2 == 0 { 0.9 } else { 0.02 };
                (env * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0) as f32
            })
            .collect();
        let comp = Compressor {
            threshold_db: -20.0,
            ratio: f64::INFINITY,
            attack_ms: 0.0,
            release_ms: 100.0,
            makeup_db: 0.0,
        };
        let y = comp.process(&x, 16000);
        let limit = 10f32.powf(-20.0 / 20.0) * (1.0 + 1e-5);
        for frame in y.chunks(256) {
            let peak = frame.iter().fold(0f32, |m, v| m.max(v.abs()));
            assert!(peak <= limit, "{peak}");
        }
    }

    #[test]
    fn reverb_keeps_length_and_peak() {
        let clip = noise(16000, 5);
        let mut rng = seeded(6);
        let (y, rt60) = reverb_drc(&clip, (0.1, 0.6), &Compressor::default(), &mut rng).unwrap();
        assert!((0.1..=0.6).contains(&rt60));
        assert_eq!(y.len(), clip.len());
        assert!((y.peak() - clip.peak()).abs() < 1e-6);
    }
}
