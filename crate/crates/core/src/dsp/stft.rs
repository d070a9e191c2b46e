use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop: usize,
}

impl StftParams {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        Self {
            n_fft,
            win_length: n_fft,
            hop,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    fn pad(&self) -> usize {
        self.n_fft / 2
    }
}

/// Frames produced by a centered STFT of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

/// Periodic Hann window of `win_length` taps, zero-padded on both sides to
/// `n_fft`.
pub fn hann_window(win_length: usize, n_fft: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_fft];
    let off = (n_fft - win_length) / 2;
    for n in 0..win_length {
        w[off + n] = 0.5 - 0.5 * (2.0 * PI * n as f64 / win_length as f64).cos();
    }
    w
}

fn reflect_pad(x: &[f64], pad: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= pad {
        return Err(Error::InvalidInput(format!(
            "signal of {n} samples is too short for reflection padding of {pad}"
        )));
    }
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    Ok(out)
}

/// Centered, reflection-padded short-time Fourier transform.
///
/// Returns `frames × (n_fft/2 + 1)` complex bins with
/// `frames = len / hop + 1`.
pub fn stft(x: &[f64], p: &StftParams) -> Result<Vec<Vec<Complex64>>> {
    if p.hop == 0 || p.win_length == 0 || p.win_length > p.n_fft {
        return Err(Error::Config(format!("invalid STFT parameters {p:?}")));
    }
    let padded = reflect_pad(x, p.pad())?;
    if padded.len() < p.n_fft {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one {}-point window after padding",
            x.len(),
            p.n_fft
        )));
    }
    let n_frames = 1 + (padded.len() - p.n_fft) / p.hop;
    let window = hann_window(p.win_length, p.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p.n_fft);
    let mut buf = vec![Complex64::default(); p.n_fft];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let n_bins = p.n_bins();
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * p.hop;
        for (b, (&s, &w)) in buf
            .iter_mut()
            .zip(padded[start..start + p.n_fft].iter().zip(&window))
        {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        frames.push(buf[..n_bins].to_vec());
    }
    Ok(frames)
}

/// Inverse of [`stft`] by weighted overlap-add, trimmed to `length` samples.
pub fn istft(frames: &[Vec<Complex64>], p: &StftParams, length: usize) -> Vec<f64> {
    let n = p.n_fft;
    let n_bins = p.n_bins();
    let total = n + p.hop * frames.len().saturating_sub(1);
    let window = hann_window(p.win_length, n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut y = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    for (t, frame) in frames.iter().enumerate() {
        buf[..n_bins].copy_from_slice(&frame[..n_bins]);
        for k in n_bins..n {
            buf[k] = buf[n - k].conj();
        }
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * p.hop;
        for i in 0..n {
            y[start + i] += buf[i].re / n as f64 * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    for (v, w) in y.iter_mut().zip(&wsum) {
        if *w > 1e-10 {
            *v /= *w;
        }
    }
    let pad = p.pad();
    (0..length)
        .map(|i| y.get(pad + i).copied().unwrap_or(0.0))
        .collect()
}

/// Per-channel magnitude spectrogram, each `frames × (n_fft/2 + 1)`.
pub fn stft_magnitude(clip: &AudioClip, p: &StftParams) -> Result<Vec<Array2<f64>>> {
    clip.channels()
        .iter()
        .map(|ch| {
            let x: Vec<f64> = ch.iter().map(|&s| f64::from(s)).collect();
            let frames = stft(&x, p)?;
            let mut mag = Array2::zeros((frames.len(), p.n_bins()));
            for (t, f) in frames.iter().enumerate() {
                for (k, c) in f.iter().enumerate() {
                    mag[[t, k]] = c.norm();
                }
            }
            Ok(mag)
        })
        .collect()
}
