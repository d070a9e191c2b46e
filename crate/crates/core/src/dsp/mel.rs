use ndarray::Array2;

use super::SpectroConfig;
use crate::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, area-normalised like librosa's
/// default (`norm="slaney"`).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    /// Non-zero column range of each filter, for sparse application.
    spans: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

pub fn mel_filterbank(cfg: &SpectroConfig, sample_rate: u32) -> Result<MelFilterbank> {
    cfg.validate()?;
    let nyquist = f64::from(sample_rate) / 2.0;
    let fmax = cfg.fmax_for(sample_rate);
    if fmax > nyquist {
        return Err(Error::Config(format!(
            "fmax {fmax} Hz exceeds Nyquist {nyquist} Hz"
        )));
    }
    if cfg.fmin >= fmax {
        return Err(Error::Config(format!(
            "fmin {} Hz must be below fmax {fmax} Hz",
            cfg.fmin
        )));
    }
    let n_bins = cfg.n_bins();
    let n_mels = cfg.n_mels;
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(fmax);
    let corners: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * f64::from(sample_rate) / cfg.n_fft as f64;

    let mut weights = Array2::zeros((n_mels, n_bins));
    let mut spans = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, center, right) = (corners[m], corners[m + 1], corners[m + 2]);
        let norm = 2.0 / (right - left);
        let mut span: Option<(usize, usize)> = None;
        for k in 0..n_bins {
            let f = bin_hz(k);
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            let w = rising.min(falling).max(0.0) * norm;
            if w > 0.0 {
                weights[[m, k]] = w;
                span = Some(match span {
                    None => (k, k + 1),
                    Some((s, _)) => (s, k + 1),
                });
            }
        }
        match span {
            Some(s) => spans.push(s),
            None => {
                return Err(Error::Config(format!(
                    "mel filter {m} is empty: {n_mels} bands are too many for a {}-point FFT at {sample_rate} Hz",
                    cfg.n_fft
                )))
            }
        }
    }
    Ok(MelFilterbank { weights, spans })
}

/// `ln(bank · |X|² + log_floor)` for a `frames × bins` magnitude spectrogram.
pub fn log_mel(mag: &Array2<f64>, bank: &MelFilterbank, log_floor: f64) -> Result<Array2<f64>> {
    if mag.ncols() != bank.n_bins() {
        return Err(Error::Shape(format!(
            "magnitude has {} bins, filterbank expects {}",
            mag.ncols(),
            bank.n_bins()
        )));
    }
    let mut out = Array2::zeros((mag.nrows(), bank.n_mels()));
    for (t, row) in mag.outer_iter().enumerate() {
        for (m, &(s, e)) in bank.spans.iter().enumerate() {
            let w = bank.weights.row(m);
            let mut acc = 0.0;
            for k in s..e {
                acc += w[k] * row[k] * row[k];
            }
            out[[t, m]] = (acc + log_floor).ln();
        }
    }
    Ok(out)
}
