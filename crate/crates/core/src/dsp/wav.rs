use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::WavError;
use crate::{Error, Result};

/// Multi-channel audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f32>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f32>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "audio must have 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidInput("audio clip is empty".into()));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("channel lengths differ".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(
                "audio contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f32>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f32>> {
        self.channels
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn downmix(&self) -> AudioClip {
        if self.channels.len() == 1 {
            return self.clone();
        }
        let n = self.channels.len() as f32;
        let mixed = (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f32>() / n)
            .collect();
        AudioClip {
            channels: vec![mixed],
            sample_rate: self.sample_rate,
        }
    }

    /// Apply `f` to every channel, keeping the sample rate.
    pub fn map_channels<F>(&self, mut f: F) -> Result<AudioClip>
    where
        F: FnMut(&[f32]) -> Vec<f32>,
    {
        let channels = self.channels.iter().map(|c| f(c)).collect();
        AudioClip::new(channels, self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn classify(err: hound::Error, path: &Path) -> WavError {
    let path = path.to_path_buf();
    match err {
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat => {
            WavError::UnsupportedEncoding {
                path,
                reason: err.to_string(),
            }
        }
        other => WavError::MalformedHeader {
            path,
            reason: other.to_string(),
        },
    }
}

/// Decode a PCM16 or float32 RIFF WAV file with one or two channels.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    if !path.is_file() {
        return Err(WavError::Missing(path.to_path_buf()).into());
    }
    let reader = WavReader::open(path).map_err(|e| classify(e, path))?;
    let spec = reader.spec();
    let n_ch = usize::from(spec.channels);
    if !(1..=2).contains(&n_ch) {
        return Err(WavError::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: format!("{n_ch} channels"),
        }
        .into());
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(e, path))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| classify(e, path))?,
        (fmt, bits) => {
            return Err(WavError::UnsupportedEncoding {
                path: path.to_path_buf(),
                reason: format!("{fmt:?} {bits}-bit samples"),
            }
            .into())
        }
    };
    if !interleaved.len().is_multiple_of(n_ch) {
        return Err(WavError::MalformedHeader {
            path: path.to_path_buf(),
            reason: "data chunk ends mid-frame".into(),
        }
        .into());
    }
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    AudioClip::new(channels, spec.sample_rate).map_err(|e| {
        WavError::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
        .into()
    })
}

pub fn save_wav(path: &Path, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    let (bits, fmt) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate(),
        bits_per_sample: bits,
        sample_format: fmt,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::InvalidInput(other.to_string()),
    };
    let mut w = WavWriter::create(path, spec).map_err(wrap)?;
    for i in 0..clip.len() {
        for c in clip.channels() {
            match encoding {
                WavEncoding::Pcm16 => {
                    let v = (c[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
                    w.write_sample(v).map_err(wrap)?;
                }
                WavEncoding::Float32 => w.write_sample(c[i]).map_err(wrap)?,
            }
        }
    }
    w.finalize().map_err(wrap)
}
