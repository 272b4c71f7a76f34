//! Recurrent double-DQN agent: the stacked-LSTM Q-network, bootstrap
//! targets, clipped TD loss, episode replay, and biased epsilon-greedy
//! exploration.

mod replay;
mod trainer;

pub use replay::{sample_batch, EpisodeRecord, ReplayMemory, TerminalCause, Transition, WindowRef};
pub use trainer::{terminal_cause, Agent, EpisodeSummary, TrainConfig, TrainError, UpdateStats};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{argmax, Action};
use crate::env::AuxInput;
use crate::grid::{GridObservation, CELLS, COLS, LAYERS, ROWS};
use crate::nn::{Activation, Architecture, LayerSpec, Network, NnError, Real, RecurrentState};

/// Index of the layer that receives the auxiliary input (the second LSTM).
pub const AUX_LAYER: usize = 4;

/// conv 8x6/4 -> conv 4x3/3 -> conv 2x2/2 -> LSTM 256 -> [+aux] LSTM 256
/// -> FC 256 ReLU -> 4 linear Q-values.
pub fn qnet_architecture() -> Architecture {
    Architecture {
        input: (ROWS, COLS, LAYERS),
        aux_dim: AuxInput::LEN,
        aux_layer: Some(AUX_LAYER),
        layers: vec![
            LayerSpec::conv((8, 6), (4, 4), 32),
            LayerSpec::conv((4, 3), (3, 3), 64),
            LayerSpec::conv((2, 2), (2, 2), 64),
            LayerSpec::lstm(256),
            LayerSpec::lstm(256),
            LayerSpec::dense(256, Activation::Relu),
            LayerSpec::dense(Action::COUNT, Activation::Identity),
        ],
    }
}

/// One rollout step: Q-values for the current observation and the updated
/// hidden state.
pub fn qnet_forward<T: Real>(
    net: &Network<T>,
    obs: &GridObservation,
    aux: AuxInput,
    hidden: &RecurrentState<T>,
) -> Result<([T; 4], RecurrentState<T>), NnError> {
    if net.input_len() != CELLS * LAYERS || net.output_dim() != Action::COUNT {
        return Err(NnError::Shape("network does not take a 45x30x4 grid to 4 Q-values".into()));
    }
    let mut dense = vec![0.0f32; CELLS * LAYERS];
    obs.write_dense(&mut dense);
    let input: Vec<T> = dense.iter().map(|v| T::lit(*v as f64)).collect();
    let aux: Vec<T> = aux.to_array().iter().map(|v| T::lit(*v as f64)).collect();
    let tape = net.forward(&input, &aux, 1, 1, Some(hidden))?;
    let out = tape.output();
    Ok(([out[0], out[1], out[2], out[3]], tape.final_state()))
}

/// Double-DQN bootstrap target: the main network picks the next action,
/// the target network values it. Terminal steps do not bootstrap.
pub fn ddqn_target(r: f64, done: bool, q_next_main: &[f32], q_next_target: &[f32], gamma: f64) -> f64 {
    if done {
        return r;
    }
    r + gamma * q_next_target[argmax(q_next_main)] as f64
}

/// Loss and its derivative for `e = y - q_pred`: quadratic inside
/// `[-1, 1]`, linear outside, so the gradient is `-2 * clip(e, -1, 1)`.
pub fn clipped_td_loss(q_pred: f64, y: f64) -> (f64, f64) {
    let e = y - q_pred;
    let loss = if e.abs() <= 1.0 { e * e } else { 2.0 * e.abs() - 1.0 };
    (loss, -2.0 * e.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of episodes that explore with `bias` instead of uniformly.
    pub bias_fraction: f64,
    /// Exploration probabilities in action order.
    pub bias: [f64; 4],
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_end: 0.1,
            bias_fraction: 0.1,
            bias: [0.35, 0.15, 0.15, 0.35],
        }
    }
}

impl ExplorationConfig {
    /// Linear from `eps_start` at episode 0 to `eps_end` at the last episode.
    pub fn epsilon(&self, episode: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.eps_start;
        }
        let frac = episode.min(total - 1) as f64 / (total - 1) as f64;
        self.eps_start - (self.eps_start - self.eps_end) * frac
    }

    pub fn distribution(&self, episode: usize, total: usize) -> [f64; 4] {
        if (episode as f64) < self.bias_fraction * total as f64 {
            self.bias
        } else {
            [0.25; 4]
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let p_ok = self.bias.iter().all(|p| *p >= 0.0) && (self.bias.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !p_ok || !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return Err("exploration probabilities must be valid".into());
        }
        Ok(())
    }
}

/// Epsilon-greedy over `q` with the episode's exploration distribution.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f32],
    episode: usize,
    total: usize,
    cfg: &ExplorationConfig,
    rng: &mut R,
) -> Action {
    let eps = cfg.epsilon(episode, total);
    if rng.random::<f64>() < eps {
        sample_from(&cfg.distribution(episode, total), rng)
    } else {
        Action::from_index(argmax(q)).expect("four Q-values")
    }
}

fn sample_from<R: Rng + ?Sized>(p: &[f64; 4], rng: &mut R) -> Action {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return Action::ALL[i];
        }
    }
    Action::ALL[p.iter().rposition(|w| *w > 0.0).unwrap_or(3)]
}

/// Copies `main` into `target` when `env_steps` is a positive multiple of
/// `period`. Returns whether a copy happened.
pub fn sync_target<T: Real>(main: &Network<T>, target: &mut Network<T>, env_steps: u64, period: u64) -> bool {
    if env_steps > 0 && env_steps.is_multiple_of(period) {
        target.params_mut().copy_from_slice(main.params());
        true
    } else {
        false
    }
}
