//! Architecture builders, looked up by name.

mod fcnn;
mod mobnet;
mod resnet;

use serde::{Deserialize, Serialize};

pub use fcnn::{Fcnn, FsFcnn, FsFcnnSplit, SmallFcnn};
pub use mobnet::Mobnet;
pub use resnet::Resnet;

use crate::nn::{ModelGraph, Shape};
use crate::{Error, Result};

/// Full-scale mono input: 423 frames × 128 mel bins × 3 channels.
pub const MONO_INPUT: Shape = [423, 128, 3];
/// Stereo stack used for the low-complexity task.
pub const STEREO_INPUT: Shape = [461, 128, 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub arch: String,
    /// Filter-count multiplier; `None` uses the architecture's default.
    pub width_mult: Option<f64>,
    pub n_classes: usize,
    pub input: Shape,
    /// Channel attention before global pooling; `None` uses the
    /// architecture's default.
    pub attention: Option<bool>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            arch: "fcnn".into(),
            width_mult: None,
            n_classes: 10,
            input: MONO_INPUT,
            attention: None,
        }
    }
}

impl ArchConfig {
    pub fn new(arch: &str, n_classes: usize, input: Shape) -> Self {
        Self {
            arch: arch.into(),
            n_classes,
            input,
            ..Default::default()
        }
    }

    pub fn with_width(mut self, w: f64) -> Self {
        self.width_mult = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.width_mult {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "width_mult must be positive, got {w}"
                )));
            }
        }
        if !matches!(self.n_classes, 3 | 10) {
            return Err(Error::Config(format!(
                "n_classes must be 3 or 10, got {}",
                self.n_classes
            )));
        }
        if self.input.contains(&0) {
            return Err(Error::Config(format!(
                "input dims {:?} must be positive",
                self.input
            )));
        }
        Ok(())
    }
}

/// Scale a base filter count, keeping at least one filter.
pub(crate) fn scaled(base: usize, width: f64) -> usize {
    ((base as f64 * width).round() as usize).max(1)
}

pub trait ArchBuilder: Send + Sync {
    fn name(&self) -> &'static str;

    fn default_width(&self) -> f64 {
        1.0
    }

    fn default_attention(&self) -> bool {
        false
    }

    /// Build with width and attention already resolved.
    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph>;

    fn build(&self, cfg: &ArchConfig) -> Result<ModelGraph> {
        cfg.validate()?;
        let width = cfg.width_mult.unwrap_or(self.default_width());
        let attention = cfg.attention.unwrap_or(self.default_attention());
        self.build_resolved(cfg, width, attention)
    }
}

pub const ARCHITECTURES: &[&str] = &[
    "fcnn",
    "small_fcnn",
    "fsfcnn",
    "fsfcnn_s",
    "resnet",
    "resnet_d",
    "mobnet",
];

pub fn builder(name: &str) -> Result<Box<dyn ArchBuilder>> {
    Ok(match name {
        "fcnn" => Box::new(Fcnn),
        "small_fcnn" => Box::new(SmallFcnn),
        "fsfcnn" => Box::new(FsFcnn),
        "fsfcnn_s" => Box::new(FsFcnnSplit),
        "resnet" => Box::new(Resnet { doubled: false }),
        "resnet_d" => Box::new(Resnet { doubled: true }),
        "mobnet" => Box::new(Mobnet),
        other => {
            return Err(Error::Config(format!(
                "unknown architecture {other:?}; expected one of {ARCHITECTURES:?}"
            )))
        }
    })
}

pub fn build(cfg: &ArchConfig) -> Result<ModelGraph> {
    builder(&cfg.arch)?.build(cfg)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builder_accepts_full_scale_inputs() {
        for name in ARCHITECTURES {
            for input in [MONO_INPUT, [400, 128, 3], STEREO_INPUT] {
                for k in [3, 10] {
                    let g = build(&ArchConfig::new(name, k, input)).unwrap();
                    assert_eq!(audit::out_len(&g), k, "{name}");
                    assert_eq!(g.input_shape(), input);
                }
            }
        }
    }

    #[test]
    fn builders_are_pure() {
        for name in ARCHITECTURES {
            let cfg = ArchConfig::new(name, 10, MONO_INPUT);
            assert_eq!(build(&cfg).unwrap(), build(&cfg).unwrap());
        }
    }

    #[test]
    fn config_errors() {
        assert!(build(&ArchConfig::new("vgg", 10, MONO_INPUT)).is_err());
        assert!(build(&ArchConfig::new("fcnn", 4, MONO_INPUT)).is_err());
        assert!(build(&ArchConfig::new("fcnn", 10, MONO_INPUT).with_width(0.0)).is_err());
    }
}
