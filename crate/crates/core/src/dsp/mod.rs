//! Log-mel feature extraction.
//!
//! The default [`SpectroConfig`] reproduces the DCASE 2020 Task 1 front end:
//! 2048-point STFT with a 2048-sample Hann window and 1024-sample hop,
//! 128 HTK mel bands, natural-log compression, then static, delta and
//! delta-delta channels computed without padding. A 10 s clip at 44.1 kHz
//! becomes a `423 × 128 × 3` tensor; a stereo 48 kHz clip `461 × 128 × 6`.

mod features;
mod io;
mod mel;
mod scale;
mod stft;
mod wav;

pub use features::{assemble_tensor, deltas, extract_features, FeatureTensor};
pub use io::{decode_feature_file, encode_feature_file, read_feature_file, write_feature_file};
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use scale::{apply_scale01, fit_scale01, ScaleAccumulator, ScaleStats};
pub use stft::{frame_count, hann_window, istft, stft, stft_magnitude, StftParams};
pub use wav::{load_wav, save_wav, AudioClip, WavEncoding};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Analysis parameters for the log-mel front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper band edge in Hz; `None` means Nyquist.
    pub fmax: Option<f64>,
    /// Added to mel power before the logarithm.
    pub log_floor: f64,
    /// Average stereo input to mono before analysis.
    pub downmix: bool,
}

impl Default for SpectroConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            win_length: 2048,
            hop: 1024,
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
            downmix: false,
        }
    }
}

impl SpectroConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 {
            return Err(Error::Config("n_fft must be at least 2".into()));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Config(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        if !(self.fmin >= 0.0) {
            return Err(Error::Config("fmin must be non-negative".into()));
        }
        Ok(())
    }

    pub fn stft_params(&self) -> StftParams {
        StftParams {
            n_fft: self.n_fft,
            win_length: self.win_length,
            hop: self.hop,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(f64::from(sample_rate) / 2.0)
    }
}
