//! Acoustic scene classification toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dsp`]: WAV decoding, STFT, HTK mel filterbank, log-mel + delta
//!   feature tensors, `[0,1]` scaling and the binary feature file format.
//! - [`augment`]: waveform and feature-level augmentations, each registered
//!   by name behind a common trait.
//! - [`nn`]: a small dense-tensor CNN engine with reverse-mode gradients,
//!   SGD with cosine-decay restarts, snapshot averaging and checkpoints.
//! - [`zoo`]: named architecture builders (FCNN family, split-band ResNet,
//!   MobileNet-v2 style).
//! - [`fusion`]: two-stage hierarchical score fusion and ensembling.
//! - [`quant`]: post-training dynamic-range int8 quantization.
//! - [`eval`]: manifests, per-device accuracy reports, prediction overlap.

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod augment;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod quant;
pub mod rng;
pub mod zoo;

pub use error::{Error, ErrorKind, Result};
