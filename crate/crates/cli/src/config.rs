//! TOML run configuration. Every section is optional and falls back to the
//! library defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use asc_core::augment::AugmentConfig;
use asc_core::dsp::SpectroConfig;
use asc_core::nn::ScheduleConfig;
use asc_core::zoo::ArchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root that manifest file names are relative to.
    pub data_root: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// Directory of extracted feature files.
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Waveform corpus generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub strategies: Vec<String>,
    /// Device whose spectrum the correction maps other devices onto.
    pub target_device: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            strategies: Vec::new(),
            target_device: "a".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Feature-level augmentations applied to every batch, in order.
    pub feature_augments: Vec<String>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            feature_augments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Class names in score-vector order; inferred from the data if empty.
    pub classes: Vec<String>,
    pub paths: PathsConfig,
    pub spectro: SpectroConfig,
    pub augment: AugmentConfig,
    pub corpus: CorpusConfig,
    pub arch: ArchConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainSection,
}

impl RunConfig {
    /// Parse a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.data_root,
            &mut cfg.paths.manifest,
            &mut cfg.paths.features,
            &mut cfg.paths.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> CliResult<()> {
        let what = || "invalid configuration".to_string();
        self.spectro.validate().ctx(what)?;
        self.augment.validate().ctx(what)?;
        self.schedule.validate().ctx(what)?;
        self.arch.validate().ctx(what)?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(CliError::Config(
                "train.epochs and train.batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Lines printed after every command so a run can be reproduced.
    pub fn reproducibility_block(&self, command: &str) -> String {
        format!(
            "[reproducibility]\ncommand = {command}\nconfig_sha256 = {}\nseed = {}\nversion = asc {}\n",
            self.hash(),
            self.seed,
            env!("CARGO_PKG_VERSION")
        )
    }
}
