use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::associator::AssociatorConfig;
use crate::baseline::GreedyConfig;
use crate::detsim::{DetectorConfig, NoiseConfig, SceneConfig};
use crate::error::{Error, Result};
use crate::lifecycle::LifecycleConfig;
use crate::training::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Everything a run depends on, in one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Sequences produced by `generate`.
    pub n_sequences: usize,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub detector: DetectorConfig,
    pub associator: AssociatorConfig,
    pub lifecycle: LifecycleConfig,
    pub train: TrainConfig,
    pub greedy: GreedyConfig,
    pub paths: RunPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            n_sequences: 4,
            scene: SceneConfig::default(),
            noise: NoiseConfig::default(),
            detector: DetectorConfig::default(),
            associator: AssociatorConfig::default(),
            lifecycle: LifecycleConfig::default(),
            train: TrainConfig::default(),
            greedy: GreedyConfig::default(),
            paths: RunPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "config schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.detector.d_model != self.associator.d_model {
            return Err(Error::InvalidArgument(format!(
                "detector d_model {} differs from associator d_model {}",
                self.detector.d_model, self.associator.d_model
            )));
        }
        if self.detector.d_app != self.scene.d_app {
            return Err(Error::InvalidArgument(
                "detector and scene appearance widths differ".into(),
            ));
        }
        self.scene.validate()?;
        self.noise.validate()?;
        self.associator.validate()?;
        self.lifecycle.validate()?;
        self.train.validate()?;
        self.greedy.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Serde(m) => Error::Serde(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
