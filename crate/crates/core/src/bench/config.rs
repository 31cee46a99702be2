use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::captioner::CaptionerConfig;
use crate::compression::CompressionRate;
use crate::distillation::{RegimeMode, TrainConfig};
use crate::features::ExtractorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Existing manifest. Relative paths resolve against the config file.
    /// When absent a toy dataset is generated under the output directory.
    pub manifest: Option<PathBuf>,
    pub toy_videos: usize,
    pub train_fraction: f64,
    pub vocab_min_freq: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            toy_videos: 40,
            train_fraction: 0.8,
            vocab_min_freq: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    pub enabled: bool,
    pub rates: Vec<CompressionRate>,
    pub repeats: usize,
    pub videos: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rates: rates(&[0.2, 0.4, 0.6, 0.8, 1.0]),
            repeats: 5,
            videos: 20,
        }
    }
}

fn rates(ks: &[f64]) -> Vec<CompressionRate> {
    ks.iter()
        .map(|&k| CompressionRate::new(k).expect("valid default rate"))
        .collect()
}

/// Full experiment description, read from TOML. `captioner.vocab_size` and
/// `captioner.latent_dim` are derived from the data and ignored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Seeds data generation, the split, extractor weights and training.
    pub seed: u64,
    /// Student compression rates.
    pub rates: Vec<CompressionRate>,
    pub regimes: Vec<RegimeMode>,
    pub lambda_rep: f64,
    pub dataset: DatasetConfig,
    pub extractor: ExtractorConfig,
    pub captioner: CaptionerConfig,
    pub train: TrainConfig,
    pub timing: TimingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rates: rates(&[0.2, 0.6]),
            regimes: vec![RegimeMode::RepOnly, RegimeMode::RepPlusCe],
            lambda_rep: 1.0,
            dataset: DatasetConfig::default(),
            extractor: ExtractorConfig::default(),
            captioner: CaptionerConfig::default(),
            train: TrainConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let config: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, resolving a relative manifest path against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(m), Some(dir)) = (config.dataset.manifest.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let f = self.dataset.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(BenchError::Config(format!("train_fraction {f} must lie in (0, 1)")));
        }
        if !(self.lambda_rep >= 0.0 && self.lambda_rep.is_finite()) {
            return Err(BenchError::Config(format!("lambda_rep {}", self.lambda_rep)));
        }
        if self.timing.enabled && (self.timing.repeats == 0 || self.timing.videos == 0) {
            return Err(BenchError::Config(
                "timing needs at least one repeat and one video".into(),
            ));
        }
        self.train.validate().map_err(|e| BenchError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = ExperimentConfig::from_toml("seed = 3\nrates = [0.4]\nregimes = [\"rep+ce\"]\n[train]\nepochs = 5\n")
            .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.rates, vec![CompressionRate::new(0.4).unwrap()]);
        assert_eq!(c.regimes, vec![RegimeMode::RepPlusCe]);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("rates = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml("[dataset]\ntrain_fraction = 1.0").is_err());
        assert!(ExperimentConfig::from_toml("regimes = [\"ce\"]").is_err());
    }
}
