use ndarray::{s, Array2, Array3, ArrayView3, Axis};

use super::{log_mel, mel_filterbank, stft_magnitude, AudioClip, SpectroConfig};
use crate::{Error, Result};

/// `time × mel × channel` model input. Channels come in groups of three
/// (static, delta, delta-delta) per audio channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    data: Array3<f32>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "feature tensor contains non-finite values".into(),
            ));
        }
        if data.is_empty() {
            return Err(Error::InvalidInput("feature tensor is empty".into()));
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array3<f32> {
        self.data
    }

    /// Row-major `T·F·C` values.
    pub fn as_slice(&self) -> &[f32] {
        self.data
            .as_slice()
            .expect("feature tensors are kept in standard layout")
    }
}

/// Regression delta with half-width 2 and no padding: the output has
/// `T - 4` frames, row `i` being the slope at input frame `i + 2`.
pub fn deltas(x: &Array2<f64>) -> Result<Array2<f64>> {
    let (t, f) = x.dim();
    if t <= 4 {
        return Err(Error::InvalidInput(format!(
            "deltas need more than 4 frames, got {t}"
        )));
    }
    let mut out = Array2::zeros((t - 4, f));
    for i in 0..t - 4 {
        let c = i + 2;
        for k in 0..f {
            out[[i, k]] =
                (x[[c + 1, k]] - x[[c - 1, k]] + 2.0 * (x[[c + 2, k]] - x[[c - 2, k]])) / 10.0;
        }
    }
    Ok(out)
}

/// Stack static, delta and delta-delta maps, aligned on the frames where the
/// delta-delta is defined (`T - 8` of them). One static map per audio
/// channel; stereo yields six output channels.
pub fn assemble_tensor(statics: &[Array2<f64>]) -> Result<FeatureTensor> {
    let first = statics
        .first()
        .ok_or_else(|| Error::InvalidInput("no static feature maps".into()))?;
    let (t, f) = first.dim();
    if statics.iter().any(|s| s.dim() != (t, f)) {
        return Err(Error::Shape("static maps differ in shape".into()));
    }
    if t <= 8 {
        return Err(Error::InvalidInput(format!(
            "need more than 8 frames for delta-deltas, got {t}"
        )));
    }
    let out_t = t - 8;
    let mut out = Array3::<f32>::zeros((out_t, f, 3 * statics.len()));
    for (a, st) in statics.iter().enumerate() {
        let d1 = deltas(st)?;
        let d2 = deltas(&d1)?;
        let parts = [
            st.slice(s![4..t - 4, ..]),
            d1.slice(s![2..t - 6, ..]),
            d2.view(),
        ];
        for (j, part) in parts.iter().enumerate() {
            let mut dst = out.index_axis_mut(Axis(2), 3 * a + j);
            dst.zip_mut_with(part, |d, &v| *d = v as f32);
        }
    }
    FeatureTensor::new(out)
}

/// Full front end: STFT magnitude → log-mel → static/Δ/ΔΔ stack.
pub fn extract_features(clip: &AudioClip, cfg: &SpectroConfig) -> Result<FeatureTensor> {
    cfg.validate()?;
    let bank = mel_filterbank(cfg, clip.sample_rate())?;
    let mono;
    let source = if cfg.downmix && clip.n_channels() > 1 {
        mono = clip.downmix();
        &mono
    } else {
        clip
    };
    let statics = stft_magnitude(source, &cfg.stft_params())?
        .iter()
        .map(|mag| log_mel(mag, &bank, cfg.log_floor))
        .collect::<Result<Vec<_>>>()?;
    assemble_tensor(&statics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_shrinks_by_four() {
        let x = Array2::from_shape_fn((431, 3), |(t, k)| (t * k) as f64);
        let d = deltas(&x).unwrap();
        assert_eq!(d.nrows(), 427);
        assert_eq!(deltas(&d).unwrap().nrows(), 423);
    }

    #[test]
    fn delta_of_constant_is_zero_and_of_ramp_is_one() {
        let c = Array2::from_elem((10, 4), 3.5);
        assert!(deltas(&c).unwrap().iter().all(|&v| v == 0.0));
        let ramp = Array2::from_shape_fn((10, 4), |(t, _)| t as f64);
        assert!(deltas(&ramp)
            .unwrap()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn delta_needs_five_frames() {
        assert!(deltas(&Array2::zeros((4, 2))).is_err());
        assert!(deltas(&Array2::zeros((5, 2))).is_ok());
    }

    #[test]
    fn assembled_shapes_and_alignment() {
        let st = Array2::from_shape_fn((431, 128), |(t, k)| ((t * 31 + k * 7) % 17) as f64);
        let ft = assemble_tensor(std::slice::from_ref(&st)).unwrap();
        assert_eq!(ft.dims(), (423, 128, 3));
        for t in 0..423 {
            for k in 0..128 {
                assert_eq!(ft.data()[[t, k, 0]], st[[t + 4, k]] as f32);
            }
        }
        let st2 = Array2::from_shape_fn((469, 128), |(t, k)| (t + k) as f64);
        let ft2 = assemble_tensor(&[st2.clone(), st2]).unwrap();
        assert_eq!(ft2.dims(), (461, 128, 6));
    }

    #[test]
    fn delta_channel_is_time_aligned() {
        // For a quadratic x[t] = t², the delta at frame t is 2t exactly.
        let st = Array2::from_shape_fn((20, 1), |(t, _)| (t * t) as f64);
        let ft = assemble_tensor(&[st]).unwrap();
        for i in 0..12 {
            let t = (i + 4) as f32;
            assert!((ft.data()[[i, 0, 1]] - 2.0 * t).abs() < 1e-4);
            assert!((ft.data()[[i, 0, 2]] - 2.0).abs() < 1e-4);
        }
    }
}
