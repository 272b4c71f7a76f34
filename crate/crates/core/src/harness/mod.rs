//! Run orchestration behind the command-line tool: configuration, training,
//! evaluation, paired comparison and the full-network gradient check.

mod eval;
mod gradcheck;
mod train;

pub use eval::{
    compare, evaluate, load_policy, CompareReport, EpisodeRow, EvalMetrics, PairedRow, Policy, TraceRow,
};
pub use gradcheck::{gradcheck_network, GradcheckConfig, GradcheckOutcome};
pub use train::{train, TrainReport};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{TrainConfig, TrainError};
use crate::baseline::RuleConfig;
use crate::control::PidConfig;
use crate::nn::checkpoint::CheckpointError;
use crate::nn::NnError;
use crate::reward::RewardConfig;
use crate::sim::{ScenarioConfig, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config serialize: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Everything one run needs. Loaded from TOML; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub eval_episodes: usize,
    /// Episodes between intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Write a per-step trace CSV for every evaluated episode.
    pub traces: bool,
    /// Write the four grid layers as PGM images for every evaluated step.
    pub dump_grids: bool,
    pub scenario: ScenarioConfig,
    pub pid: PidConfig,
    pub reward: RewardConfig,
    pub rule: RuleConfig,
    pub train: TrainConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            eval_episodes: 30,
            checkpoint_every: 25,
            traces: true,
            dump_grids: false,
            scenario: ScenarioConfig::default(),
            pid: PidConfig::default(),
            reward: RewardConfig::default(),
            rule: RuleConfig::default(),
            train: TrainConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let checks = [
            self.scenario.validate().map_err(|e| e.to_string()),
            self.pid.validate(),
            self.reward.validate(),
            self.train.validate(),
        ];
        for c in checks {
            c.map_err(HarnessError::Config)?;
        }
        if self.checkpoint_every == 0 {
            return Err(HarnessError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn prepare_out_dir(&self) -> Result<(), HarnessError> {
        std::fs::create_dir_all(&self.out_dir).map_err(io_err(&self.out_dir))?;
        let path = self.out_dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(io_err(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.train.episodes = 7;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 3\n[train]\nepisodes = 12\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.episodes, 12);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.eval_episodes, 30);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[train]\ngamma = 1.5\n").is_err());
        assert!(RunConfig::from_toml("[scenario]\ndt = 0.0\n").is_err());
    }
}
