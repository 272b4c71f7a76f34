use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::replay::{sample_batch, EpisodeRecord, ReplayMemory, TerminalCause, Transition, WindowRef};
use super::{clipped_td_loss, ddqn_target, qnet_architecture, qnet_forward, select_action, sync_target, ExplorationConfig};
use crate::env::{DrivingEnv, StepRecord};
use crate::grid::{CELLS, LAYERS};
use crate::nn::checkpoint::{self, CheckpointError, CheckpointHeader};
use crate::nn::{AdamConfig, AdamState, InitScheme, Network, NnError};
use crate::sim::{EpisodeStatus, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub batch_size: usize,
    /// Consecutive steps per training window.
    pub window: usize,
    pub memory_episodes: usize,
    /// Environment steps between target-network copies.
    pub target_update: u64,
    /// Eligible episodes required before updates start.
    pub min_episodes: usize,
    /// Environment steps per gradient update.
    pub train_every: u64,
    pub adam: AdamConfig,
    pub exploration: ExplorationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            gamma: 0.9,
            batch_size: 32,
            window: 8,
            memory_episodes: 50,
            target_update: 10_000,
            min_episodes: 5,
            train_every: 3,
            adam: AdamConfig::default(),
            exploration: ExplorationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 || self.batch_size == 0 || self.window == 0 || self.memory_episodes == 0 {
            return Err("episodes, batch size, window and memory must be positive".into());
        }
        if self.target_update == 0 || self.train_every == 0 {
            return Err("target update period and train_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        if !(self.adam.alpha >= 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err("Adam hyperparameters out of range".into());
        }
        self.exploration.validate()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss {loss} at update {update}")]
    NonFiniteLoss {
        loss: f64,
        update: u64,
        windows: Vec<WindowRef>,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    /// Mean ego speed, m/s.
    pub mean_speed: f64,
    pub distance: f64,
    pub cause: TerminalCause,
    pub epsilon: f64,
    pub updates: u64,
    pub mean_loss: Option<f64>,
}

pub fn terminal_cause(status: EpisodeStatus) -> Option<TerminalCause> {
    match status {
        EpisodeStatus::Running => None,
        EpisodeStatus::Goal => Some(TerminalCause::Goal),
        EpisodeStatus::Collision => Some(TerminalCause::Collision),
        EpisodeStatus::StepLimit => Some(TerminalCause::StepLimit),
    }
}

/// Training state: main and target networks, optimizer, replay, counters.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: TrainConfig,
    pub main: Network<f32>,
    pub target: Network<f32>,
    adam: AdamState<f32>,
    pub memory: ReplayMemory,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes_done: usize,
    pub seed: u64,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
}

impl Agent {
    /// Fresh agent. The three generators are independent sub-streams of the
    /// run seed.
    pub fn new(
        config: TrainConfig,
        seed: u64,
        init_rng: &mut ChaCha8Rng,
        explore_rng: ChaCha8Rng,
        sample_rng: ChaCha8Rng,
    ) -> Result<Self, NnError> {
        let main = Network::<f32>::init(qnet_architecture(), init_rng)?;
        let target = main.clone();
        let adam = AdamState::new(main.num_params(), config.adam);
        Ok(Self {
            memory: ReplayMemory::new(config.memory_episodes),
            config,
            main,
            target,
            adam,
            env_steps: 0,
            updates: 0,
            episodes_done: 0,
            seed,
            explore_rng,
            sample_rng,
        })
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        self.config.exploration.epsilon(episode, self.config.episodes)
    }

    /// Runs one epsilon-greedy episode in `env`, updating after every
    /// `train_every` environment steps once replay is warm, and stores the
    /// episode. `on_step` sees each step's trace record.
    pub fn train_episode(
        &mut self,
        env: &mut DrivingEnv,
        episode: usize,
        seed: u64,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<EpisodeSummary, TrainError> {
        let total = self.config.episodes;
        let mut hidden = self.main.zero_state(1);
        let mut transitions = Vec::new();
        let mut total_reward = 0.0;
        let mut loss_sum = 0.0;
        let mut loss_count = 0u64;
        let cause = loop {
            let (obs, aux) = env.observe();
            let (q, next_hidden) = qnet_forward(&self.main, &obs, aux, &hidden)?;
            hidden = next_hidden;
            let action = select_action(&q, episode, total, &self.config.exploration, &mut self.explore_rng);
            let out = env.step_action(action)?;
            on_step(&out.record);
            total_reward += out.reward;
            let cause = terminal_cause(out.status);
            transitions.push(Transition {
                obs,
                aux,
                action,
                reward: out.reward as f32,
                done: cause.is_some(),
            });
            self.env_steps += 1;
            if self.env_steps.is_multiple_of(self.config.train_every)
                && self.memory.eligible(self.config.window) >= self.config.min_episodes
            {
                if let Some(stats) = self.update()? {
                    loss_sum += stats.loss;
                    loss_count += 1;
                }
            }
            sync_target(&self.main, &mut self.target, self.env_steps, self.config.target_update);
            if let Some(c) = cause {
                break c;
            }
        };
        let steps = transitions.len();
        self.memory.push(EpisodeRecord {
            transitions,
            seed,
            cause,
        });
        self.episodes_done += 1;
        Ok(EpisodeSummary {
            episode,
            seed,
            steps,
            total_reward,
            mean_speed: env.mean_speed(),
            distance: env.distance(),
            cause,
            epsilon: self.epsilon(episode),
            updates: self.updates,
            mean_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
        })
    }

    /// One gradient step on a sampled batch; `None` if replay is not ready.
    pub fn update(&mut self) -> Result<Option<UpdateStats>, TrainError> {
        let (b, w) = (self.config.batch_size, self.config.window);
        let Some(windows) = sample_batch(&self.memory, b, w, &mut self.sample_rng) else {
            return Ok(None);
        };
        // One extra step so the last transition of each window has a
        // successor to bootstrap from.
        let steps = w + 1;
        let in_len = CELLS * LAYERS;
        let aux_len = crate::env::AuxInput::LEN;
        let mut input = vec![0.0f32; steps * b * in_len];
        let mut aux = vec![0.0f32; steps * b * aux_len];
        for (bi, win) in windows.iter().enumerate() {
            let ep = self.memory.get(win.episode);
            for t in 0..steps {
                let Some(tr) = ep.transitions.get(win.start + t) else { continue };
                let row = t * b + bi;
                tr.obs.write_dense(&mut input[row * in_len..(row + 1) * in_len]);
                aux[row * aux_len..(row + 1) * aux_len].copy_from_slice(&tr.aux.to_array());
            }
        }
        let tape = self.main.forward(&input, &aux, b, steps, None)?;
        let target_tape = self.target.forward(&input, &aux, b, steps, None)?;
        let q_main = tape.output();
        let q_target = target_tape.output();
        let n_out = 4;
        let mut d_out = vec![0.0f32; q_main.len()];
        let scale = 1.0 / (b * w) as f64;
        let mut loss = 0.0;
        let mut q_sum = 0.0;
        for (bi, win) in windows.iter().enumerate() {
            let ep = self.memory.get(win.episode);
            for t in 0..w {
                let tr = &ep.transitions[win.start + t];
                let row = t * b + bi;
                let next = (t + 1) * b + bi;
                let a = tr.action.index();
                let q_pred = q_main[row * n_out + a] as f64;
                let y = ddqn_target(
                    tr.reward as f64,
                    tr.done,
                    &q_main[next * n_out..(next + 1) * n_out],
                    &q_target[next * n_out..(next + 1) * n_out],
                    self.config.gamma,
                );
                let (l, g) = clipped_td_loss(q_pred, y);
                loss += l * scale;
                q_sum += q_pred * scale;
                d_out[row * n_out + a] = (g * scale) as f32;
            }
        }
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                loss,
                update: self.updates,
                windows,
            });
        }
        let grads = self.main.backward(&tape, &d_out)?;
        self.adam.update(self.main.params_mut(), &grads)?;
        self.updates += 1;
        Ok(Some(UpdateStats { loss, mean_q: q_sum }))
    }

    pub fn metadata(&self) -> serde_json::Value {
        let next_eps = self.epsilon(self.episodes_done.min(self.config.episodes.saturating_sub(1)));
        serde_json::json!({
            "episodes": self.episodes_done,
            "env_steps": self.env_steps,
            "updates": self.updates,
            "epsilon": next_eps,
            "replay_episodes": self.memory.len(),
            "replay_transitions": self.memory.total_transitions(),
            "train": self.config,
        })
    }

    /// Writes main and target parameters plus training metadata.
    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<(), TrainError> {
        let header = CheckpointHeader {
            architecture: self.main.architecture().clone(),
            init: InitScheme::HeUniformLstmForgetOne,
            seed: self.seed,
            sections: vec!["main".into(), "target".into()],
            metadata: self.metadata(),
        };
        checkpoint::write(out, &header, &[self.main.params(), self.target.params()])?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::PidConfig;
    use rand::SeedableRng;
    use crate::reward::RewardConfig;
    use crate::sim::{ScenarioConfig, StaticMap};
    use std::sync::Arc;

    fn agent(config: TrainConfig) -> Agent {
        let mut init = ChaCha8Rng::seed_from_u64(1);
        Agent::new(config, 1, &mut init, ChaCha8Rng::seed_from_u64(2), ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn env(scenario: ScenarioConfig, seed: u64) -> DrivingEnv {
        let map = Arc::new(StaticMap::build(&scenario.map));
        DrivingEnv::new(Arc::new(scenario), map, seed, PidConfig::default(), RewardConfig::default()).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut cfg = TrainConfig { min_episodes: 1, window: 4, batch_size: 2, ..Default::default() };
        cfg.adam.alpha = 0.0;
        let mut a = agent(cfg);
        let mut scenario = ScenarioConfig::walking_speed();
        scenario.max_steps = 12;
        let before = a.main.params().to_vec();
        for ep in 0..3 {
            a.train_episode(&mut env(scenario.clone(), ep), ep as usize, ep, |_| {}).unwrap();
        }
        assert!(a.updates > 0);
        assert_eq!(a.main.params(), &before[..]);
    }

    #[test]
    fn step_limit_episode_is_recorded() {
        let mut a = agent(TrainConfig::default());
        let mut scenario = ScenarioConfig::walking_speed();
        scenario.max_steps = 15;
        let s = a.train_episode(&mut env(scenario, 4), 0, 4, |_| {}).unwrap();
        assert!(s.steps <= 15);
        let rec = a.memory.get(0);
        assert_eq!(rec.len(), s.steps);
        assert!(rec.transitions[..rec.len() - 1].iter().all(|t| !t.done));
        assert!(rec.transitions.last().unwrap().done);
    }
}
