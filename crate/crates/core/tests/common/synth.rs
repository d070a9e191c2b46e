//! Generated spectrogram corpora with class-specific spectral signatures.

use asc_core::dsp::FeatureTensor;
use asc_core::nn::{one_hot, Example};
use asc_core::rng::{derive_seed_index, seeded};
use ndarray::Array3;
use rand::Rng as _;

pub const FRAMES: usize = 32;
pub const BINS: usize = 32;
pub const CHANNELS: usize = 3;
pub const N_CLASSES: usize = 3;

/// Centre bin of each class's energy band.
const CENTRES: [usize; N_CLASSES] = [6, 16, 26];

/// One `[0,1]`-scaled item: a Gaussian-shaped band around the class centre
/// with a random onset, plus uniform background noise on every channel.
pub fn item(class: usize, seed: u64) -> FeatureTensor {
    let mut rng = seeded(seed);
    let centre = CENTRES[class] as f32 + rng.random_range(-1.5f32..1.5);
    let gain = rng.random_range(0.3f32..0.6);
    let onset = rng.random_range(0..FRAMES / 2);
    let mut a = Array3::<f32>::zeros((FRAMES, BINS, CHANNELS));
    for t in 0..FRAMES {
        for f in 0..BINS {
            let band = if t >= onset {
                gain * (-((f as f32 - centre).powi(2)) / 8.0).exp()
            } else {
                0.0
            };
            a[[t, f, 0]] = (band + rng.random_range(0.0f32..0.5)).min(1.0);
            a[[t, f, 1]] = rng.random_range(0.3f32..0.7);
            a[[t, f, 2]] = rng.random_range(0.3f32..0.7);
        }
    }
    FeatureTensor::new(a).expect("finite synthetic features")
}

/// `per_class` items of each class, interleaved, with their labels.
pub fn corpus(per_class: usize, seed: u64) -> Vec<(FeatureTensor, usize)> {
    (0..per_class * N_CLASSES)
        .map(|i| {
            let class = i % N_CLASSES;
            (item(class, derive_seed_index(seed, i as u64)), class)
        })
        .collect()
}

pub fn examples(items: &[(FeatureTensor, usize)]) -> Vec<Example> {
    items
        .iter()
        .map(|(f, c)| Example {
            features: f.clone(),
            target: one_hot(*c, N_CLASSES),
        })
        .collect()
}
