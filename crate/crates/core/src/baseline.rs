//! Rule-based comparison policy: cruise at a fixed desired speed, brake hard
//! for crossing pedestrians close ahead.

use serde::{Deserialize, Serialize};

use crate::control::{Actuation, ControlTick, PidConfig, SpeedController};
use crate::sim::{Behavior, WorldState};
use crate::units::kmh_to_mps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub v_max_kmh: f64,
    /// Brake range ahead of the front bumper, m.
    pub range: f64,
    /// Half-width of the watched corridor, m.
    pub corridor: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            v_max_kmh: 15.0,
            range: 7.0,
            corridor: 3.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleDecision {
    Cruise,
    EmergencyBrake,
}

/// Decision from the current world only. Sidewalk-only pedestrians are
/// ignored.
pub fn rule_policy(world: &WorldState, cfg: &RuleConfig) -> RuleDecision {
    let front = 0.5 * world.ego.length;
    let threat = world.pedestrians.iter().any(|p| {
        if !matches!(p.behavior, Behavior::LegalCrossing | Behavior::Jaywalking) {
            return false;
        }
        let (dx, dy) = world.to_ego_frame(p.position);
        let ahead = dx - front;
        ahead > 0.0 && ahead <= cfg.range && dy.abs() <= cfg.corridor
    });
    if threat {
        RuleDecision::EmergencyBrake
    } else {
        RuleDecision::Cruise
    }
}

/// The rule policy plus the PID loop it drives.
#[derive(Debug, Clone)]
pub struct RuleDriver {
    pub config: RuleConfig,
    controller: SpeedController,
}

impl RuleDriver {
    pub fn new(config: RuleConfig, pid: PidConfig) -> Self {
        Self {
            config,
            controller: SpeedController::new(pid),
        }
    }

    pub fn act(&mut self, world: &WorldState) -> (RuleDecision, ControlTick) {
        let decision = rule_policy(world, &self.config);
        let v = &world.config.vehicle;
        let tick = match decision {
            RuleDecision::EmergencyBrake => ControlTick {
                desired_mps: kmh_to_mps(self.config.v_max_kmh),
                accel_cmd: 0.0,
                actuation: Actuation::FULL_BRAKE,
            },
            RuleDecision::Cruise => self.controller.track(
                kmh_to_mps(self.config.v_max_kmh),
                world.ego.speed,
                world.config.dt,
                v.accel_max,
                v.brake_max,
            ),
        };
        (decision, tick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Pedestrian, ScenarioConfig};

    fn world(peds: Vec<Pedestrian>) -> WorldState {
        let mut w = WorldState::reset(&ScenarioConfig::default(), 0).unwrap();
        w.ego.s = 10.0;
        w.pedestrians = peds;
        w
    }

    const FRONT: f64 = 12.25;

    #[test]
    fn jaywalker_five_ahead_triggers_brake() {
        let w = world(vec![Pedestrian::standing(0, [FRONT + 5.0, 1.0], Behavior::Jaywalking)]);
        assert_eq!(rule_policy(&w, &RuleConfig::default()), RuleDecision::EmergencyBrake);
    }

    #[test]
    fn crossing_pedestrian_eight_ahead_is_ignored() {
        let w = world(vec![Pedestrian::standing(0, [FRONT + 8.0, 0.0], Behavior::LegalCrossing)]);
        assert_eq!(rule_policy(&w, &RuleConfig::default()), RuleDecision::Cruise);
    }

    #[test]
    fn sidewalk_walker_is_ignored() {
        let w = world(vec![Pedestrian::standing(0, [FRONT + 3.0, 3.0], Behavior::SidewalkOnly)]);
        assert_eq!(rule_policy(&w, &RuleConfig::default()), RuleDecision::Cruise);
    }

    #[test]
    fn brake_decision_yields_full_brake() {
        let w = world(vec![Pedestrian::standing(0, [FRONT + 1.0, -2.0], Behavior::LegalCrossing)]);
        let mut d = RuleDriver::new(RuleConfig::default(), PidConfig::default());
        let (dec, tick) = d.act(&w);
        assert_eq!(dec, RuleDecision::EmergencyBrake);
        assert_eq!(tick.actuation, Actuation::FULL_BRAKE);
    }

    #[test]
    fn cruise_converges_to_fifteen_kmh() {
        let mut cfg = ScenarioConfig::default();
        cfg.pedestrians.behavior_probs = [0.0, 0.0, 1.0];
        let mut w = WorldState::reset(&cfg, 0).unwrap();
        let mut d = RuleDriver::new(RuleConfig::default(), PidConfig::default());
        for _ in 0..200 {
            let (_, tick) = d.act(&w);
            w.step(tick.actuation).unwrap();
        }
        assert!((w.ego.speed * 3.6 - 15.0).abs() < 0.2, "{}", w.ego.speed * 3.6);
    }
}
