use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, Result};
use crate::data::SceneConfig;
use crate::regularizers::RegConfig;

/// Top-level experiment file.
///
/// ```toml
/// seed = 7
/// [scene]
/// classes = 6
/// dominance_mask_fraction = 0.5
/// [split]
/// train = 512
/// eval = 128
/// [train]
/// epochs = 60
/// lambda_p = 0.3
/// lambda_f = 0.02
/// data_dir = "data"
/// ```
///
/// Every key is optional; missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub scene: SceneConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            scene: SceneConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: usize,
    pub eval: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 512, eval: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_power: f64,
    pub lambda_p: f64,
    pub lambda_f: f64,
    pub epsilon: f64,
    pub feature_target_detached: bool,
    pub dropout: bool,
    /// Evaluate every this many epochs, and always after the last one.
    pub eval_every: usize,
    /// Eval samples used for the Fisher report.
    pub probe_size: usize,
    pub eval_batch_size: usize,
    /// Directory holding `train/` and `eval/` datasets.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Modalities to use; empty means all of the dataset's.
    pub modalities: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            base_lr: 1e-3,
            lr_power: 0.9,
            lambda_p: 0.3,
            lambda_f: 0.02,
            epsilon: 1e-6,
            feature_target_detached: true,
            dropout: true,
            eval_every: 5,
            probe_size: 8,
            eval_batch_size: 16,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
            modalities: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// Schedule for a large pretrained backbone: lower learning rate, longer run.
    pub fn large_backbone() -> Self {
        Self {
            base_lr: 6e-5,
            epochs: 200,
            ..Self::default()
        }
    }

    pub fn reg(&self) -> RegConfig {
        RegConfig {
            lambda_p: self.lambda_p,
            lambda_f: self.lambda_f,
            epsilon: self.epsilon,
            feature_target_detached: self.feature_target_detached,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Invalid(msg));
        if self.epochs == 0 {
            return bad("train.epochs: must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("train.batch_size: must be at least 1".into());
        }
        if self.eval_batch_size == 0 {
            return bad("train.eval_batch_size: must be at least 1".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("train.base_lr: must be positive, got {}", self.base_lr));
        }
        if !(self.lr_power >= 0.0 && self.lr_power.is_finite()) {
            return bad(format!("train.lr_power: must be >= 0, got {}", self.lr_power));
        }
        if self.eval_every == 0 {
            return bad("train.eval_every: must be at least 1".into());
        }
        if self.probe_size == 0 {
            return bad("train.probe_size: must be at least 1".into());
        }
        self.reg()
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("train.{e}")))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let config: Config = toml::from_str(&text).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            msg: e.message().to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.split.train == 0 {
            return Err(HarnessError::Invalid("split.train: must be at least 1".into()));
        }
        if self.split.eval == 0 {
            return Err(HarnessError::Invalid("split.eval: must be at least 1".into()));
        }
        self.train.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
