use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{GatePolicy, ModelConfig, SugarVariant};
use crate::task::TaskConfig;

/// Seed streams derived from the experiment seed.
pub const SEED_INIT: u64 = 1;
pub const SEED_TRAIN: u64 = 2;
pub const SEED_TEST: u64 = 3;

/// Mixes an experiment seed with a stream id and an index (splitmix64).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Length of each training episode.
    pub episode_len: usize,
    /// BPTT window length; state is carried across windows.
    pub window: usize,
    /// Number of windows (parameter updates).
    pub windows: usize,
    pub learning_rate: f64,
    /// Metrics are logged every this many windows.
    pub log_every: usize,
    /// Gate control while training; anything but `learned` trains a
    /// baseline with a fixed gate schedule.
    pub gate: GatePolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episode_len: 1000,
            window: 50,
            windows: 4000,
            learning_rate: 1e-3,
            log_every: 100,
            gate: GatePolicy::Learned,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub episode_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 20,
            episode_len: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: SugarVariant,
    pub seed: u64,
    pub out_dir: String,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: SugarVariant::C,
            seed: 0,
            out_dir: "runs/default".into(),
            task: TaskConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model.validate()?;
        let t = &self.train;
        if t.window < 2 {
            return Err(Error::InvalidConfig(format!("window {} < 2", t.window)));
        }
        if t.episode_len < 2 {
            return Err(Error::InvalidConfig(format!("episode_len {} < 2", t.episode_len)));
        }
        if t.log_every == 0 {
            return Err(Error::InvalidConfig("log_every must be positive".into()));
        }
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", t.learning_rate)));
        }
        if self.eval.episodes == 0 || self.eval.episode_len < 2 {
            return Err(Error::InvalidConfig("eval needs at least one episode of length >= 2".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 over everything that influences results (the output
    /// directory is excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir.clear();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}
