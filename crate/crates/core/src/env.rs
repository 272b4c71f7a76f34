//! One driving episode as seen by a policy: world, speed controller, reward,
//! and the previous action, advanced one high-level action at a time.

use std::sync::Arc;

use serde::Serialize;

use crate::action::Action;
use crate::control::{ControlTick, PidConfig, SpeedController};
use crate::grid::{encode, GridObservation};
use crate::reward::{compute_reward, RewardCase, RewardConfig};
use crate::sim::{compute_ttc, min_ttc, EpisodeStatus, ScenarioConfig, SimError, StaticMap, WorldState};

/// Auxiliary network input: normalized ego speed and the previous action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxInput {
    /// Ego speed over the configured max speed, clamped to `[0, 1]`.
    pub speed: f32,
    /// Action applied at the previous step; `None` at episode start.
    pub prev_action: Option<Action>,
}

impl AuxInput {
    pub const LEN: usize = 1 + Action::COUNT;

    pub fn new(speed_mps: f64, max_speed_mps: f64, prev_action: Option<Action>) -> Self {
        Self {
            speed: (speed_mps / max_speed_mps).clamp(0.0, 1.0) as f32,
            prev_action,
        }
    }

    pub fn to_array(self) -> [f32; Self::LEN] {
        let mut out = [0.0; Self::LEN];
        out[0] = self.speed;
        if let Some(a) = self.prev_action {
            out[1 + a.index()] = 1.0;
        }
        out
    }
}

/// Per-step values for the episode trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u32,
    pub time: f64,
    pub s: f64,
    pub speed: f64,
    pub desired: f64,
    pub accel_cmd: f64,
    pub throttle: f64,
    pub brake: f64,
    pub action: String,
    pub reward: f64,
    pub reward_case: RewardCase,
    pub min_ttc: Option<f64>,
    pub pedestrians: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub status: EpisodeStatus,
    pub record: StepRecord,
}

#[derive(Debug, Clone)]
pub struct DrivingEnv {
    pub world: WorldState,
    pub controller: SpeedController,
    pub reward: RewardConfig,
    prev_action: Option<Action>,
    start_s: f64,
    speed_sum: f64,
}

impl DrivingEnv {
    pub fn new(
        scenario: Arc<ScenarioConfig>,
        map: Arc<StaticMap>,
        seed: u64,
        pid: PidConfig,
        reward: RewardConfig,
    ) -> Result<Self, SimError> {
        let world = WorldState::reset_with_map(scenario, map, seed)?;
        Ok(Self {
            start_s: world.ego.s,
            world,
            controller: SpeedController::new(pid),
            reward,
            prev_action: None,
            speed_sum: 0.0,
        })
    }

    pub fn observe(&self) -> (GridObservation, AuxInput) {
        let w = &self.world;
        let aux = AuxInput::new(w.ego.speed, w.config.vehicle.max_speed_mps(), self.prev_action);
        (encode(w), aux)
    }

    pub fn status(&self) -> EpisodeStatus {
        self.world.status()
    }

    /// Route distance covered so far, m.
    pub fn distance(&self) -> f64 {
        self.world.ego.s - self.start_s
    }

    /// Mean ego speed over the steps taken so far, m/s.
    pub fn mean_speed(&self) -> f64 {
        if self.world.step == 0 {
            0.0
        } else {
            self.speed_sum / self.world.step as f64
        }
    }

    /// Applies a high-level action through the PID loop.
    pub fn step_action(&mut self, action: Action) -> Result<StepOutcome, SimError> {
        let v = &self.world.config.vehicle;
        let tick = self
            .controller
            .tick(action, self.world.ego.speed, self.world.config.dt, v.accel_max, v.brake_max);
        let out = self.apply(tick, action.name());
        self.prev_action = Some(action);
        out
    }

    /// Applies a precomputed control tick (used by the rule baseline).
    pub fn step_control(&mut self, tick: ControlTick, label: &str) -> Result<StepOutcome, SimError> {
        self.apply(tick, label)
    }

    fn apply(&mut self, tick: ControlTick, label: &str) -> Result<StepOutcome, SimError> {
        self.world.step(tick.actuation)?;
        let w = &self.world;
        self.speed_sum += w.ego.speed;
        let ttc = compute_ttc(w);
        let (reward, case) = compute_reward(w, &ttc, &self.reward);
        let record = StepRecord {
            step: w.step,
            time: w.step as f64 * w.config.dt,
            s: w.ego.s,
            speed: w.ego.speed,
            desired: tick.desired_mps,
            accel_cmd: tick.accel_cmd,
            throttle: tick.actuation.throttle,
            brake: tick.actuation.brake,
            action: label.to_string(),
            reward,
            reward_case: case,
            min_ttc: min_ttc(&ttc),
            pedestrians: w.pedestrians.iter().map(|p| p.position).collect(),
        };
        Ok(StepOutcome {
            reward,
            status: w.status(),
            record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aux_layout() {
        let a = AuxInput::new(2.0, 4.0, Some(Action::Brake)).to_array();
        assert_eq!(a, [0.5, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(AuxInput::new(9.0, 4.0, None).to_array(), [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn distance_and_speed_accumulate() {
        let cfg = Arc::new(ScenarioConfig::default());
        let map = Arc::new(StaticMap::build(&cfg.map));
        let mut env = DrivingEnv::new(cfg, map, 0, PidConfig::default(), RewardConfig::default()).unwrap();
        for _ in 0..20 {
            env.step_action(Action::Accelerate).unwrap();
        }
        assert_eq!(env.distance(), env.world.ego.s);
        assert!(env.mean_speed() > 0.0);
        assert_eq!(env.observe().1.prev_action, Some(Action::Accelerate));
    }
}
