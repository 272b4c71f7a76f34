use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pedestrian::pedestrian_step;
use super::{Behavior, Pedestrian, Phase, ScenarioConfig, SimError, StaticMap};
use crate::control::Actuation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Arc length of the vehicle center along the route, m.
    pub s: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeStatus {
    Running,
    Goal,
    Collision,
    StepLimit,
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }

    pub fn name(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Goal => "goal",
            EpisodeStatus::Collision => "collision",
            EpisodeStatus::StepLimit => "step-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: Arc<ScenarioConfig>,
    pub map: Arc<StaticMap>,
    pub ego: EgoState,
    pub pedestrians: Vec<Pedestrian>,
    pub step: u32,
    pub collided: bool,
    pub goal_reached: bool,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl WorldState {
    /// Fresh episode: ego at the route start at rest, pedestrians sampled on
    /// the sidewalks ahead.
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let map = Arc::new(StaticMap::build(&config.map));
        Self::reset_with_map(Arc::new(config.clone()), map, seed)
    }

    /// Like [`WorldState::reset`] but reuses an already built map for `config`.
    pub fn reset_with_map(config: Arc<ScenarioConfig>, map: Arc<StaticMap>, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let ego = EgoState {
            s: 0.0,
            speed: 0.0,
            length: config.vehicle.length,
            width: config.vehicle.width,
        };
        let mut world = Self {
            config,
            map,
            ego,
            pedestrians: Vec::new(),
            step: 0,
            collided: false,
            goal_reached: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
        };
        let ahead = world.config.pedestrians.spawn_ahead;
        while world.pedestrians.len() < world.config.pedestrians.count {
            world.spawn(0.0, ahead);
        }
        Ok(world)
    }

    pub fn ego_position(&self) -> [f64; 2] {
        self.map.route().point_at(self.ego.s)
    }

    pub fn ego_heading(&self) -> f64 {
        self.map.route().heading_at(self.ego.s)
    }

    /// Pedestrian position in the ego frame: (longitudinal, lateral-left).
    pub fn to_ego_frame(&self, p: [f64; 2]) -> (f64, f64) {
        let o = self.ego_position();
        let h = self.ego_heading();
        let (dx, dy) = (p[0] - o[0], p[1] - o[1]);
        (dx * h.cos() + dy * h.sin(), -dx * h.sin() + dy * h.cos())
    }

    pub fn status(&self) -> EpisodeStatus {
        if self.collided {
            EpisodeStatus::Collision
        } else if self.goal_reached {
            EpisodeStatus::Goal
        } else if self.step >= self.config.max_steps {
            EpisodeStatus::StepLimit
        } else {
            EpisodeStatus::Running
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.status().is_terminal()
    }

    /// Advances the world by one `dt`.
    pub fn step(&mut self, act: Actuation) -> Result<(), SimError> {
        let status = self.status();
        if status.is_terminal() {
            return Err(SimError::Terminal(status));
        }
        let ok = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !ok(act.throttle) || !ok(act.brake) || act.throttle * act.brake != 0.0 {
            return Err(SimError::Actuation(format!(
                "throttle {} / brake {} must lie in [0, 1] and not both be non-zero",
                act.throttle, act.brake
            )));
        }
        let dt = self.config.dt;
        let v = &self.config.vehicle;

        let drive = v.accel_max * act.throttle - v.brake_max * act.brake;
        let moving = self.ego.speed > 0.0 || drive > 0.0;
        let accel = drive - if moving { v.rolling_resistance } else { 0.0 };
        self.ego.speed = (self.ego.speed + accel * dt).max(0.0);
        let length = self.map.route().length();
        self.ego.s = (self.ego.s + self.ego.speed * dt).min(length);

        let sigma = self.config.pedestrians.heading_noise_deg.to_radians();
        for i in 0..self.pedestrians.len() {
            self.pedestrians[i] = pedestrian_step(&self.pedestrians[i], &self.map, &mut self.rng, dt, sigma);
        }
        self.maintain();

        self.step += 1;
        self.collided = self.pedestrians.iter().any(|p| self.overlaps_ego(p.position));
        self.goal_reached = self.ego.s >= length;
        Ok(())
    }

    /// Removes pedestrians that fell behind or wandered off and refills the
    /// population ahead of the ego.
    fn maintain(&mut self) {
        let pc = &self.config.pedestrians;
        let (behind, beyond) = (pc.remove_behind, pc.remove_beyond);
        let keep: Vec<bool> = self
            .pedestrians
            .iter()
            .map(|p| {
                let (dx, dy) = self.to_ego_frame(p.position);
                dx >= -behind && dx.hypot(dy) <= beyond
            })
            .collect();
        let mut k = keep.iter();
        self.pedestrians.retain(|_| *k.next().unwrap());
        let (lo, hi) = (pc.respawn_min_ahead, pc.respawn_max_ahead);
        while self.pedestrians.len() < self.config.pedestrians.count {
            self.spawn(lo, hi);
        }
    }

    /// Samples a pedestrian on a sidewalk band `[lo, hi]` m ahead of the ego.
    fn spawn(&mut self, lo: f64, hi: f64) {
        let pc = self.config.pedestrians.clone();
        let map = Arc::clone(&self.map);
        let rng = &mut self.rng;

        let u: f64 = rng.random();
        let behavior = if u < pc.behavior_probs[0] {
            Behavior::LegalCrossing
        } else if u < pc.behavior_probs[0] + pc.behavior_probs[1] {
            Behavior::Jaywalking
        } else {
            Behavior::SidewalkOnly
        };
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let base = self.map.route().point_at(self.ego.s)[0];
        let x = base + rng.random_range(lo..=hi);
        let hw = map.road_half_width();
        let sw = map.sidewalk_width();
        let y = side * rng.random_range(hw + 0.2..=hw + sw - 0.2);
        let (vmin, vmax) = pc.speed_range_mps();
        let desired_speed = rng.random_range(vmin..=vmax);
        let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let far_side = map.sidewalk_center(-side);

        let (phase, goal, crosswalk) = match behavior {
            Behavior::SidewalkOnly => {
                let gx = x + dir * rng.random_range(10.0..=40.0);
                (Phase::ToGoal, [gx, map.sidewalk_center(side)], None)
            }
            Behavior::LegalCrossing => {
                let cw = *map
                    .main_crosswalks()
                    .iter()
                    .min_by(|a, b| (a.center_x() - x).abs().total_cmp(&(b.center_x() - x).abs()))
                    .expect("map has crosswalks");
                let gx = cw.center_x() + dir * rng.random_range(5.0..=25.0);
                (Phase::Approach { x: cw.center_x() }, [gx, far_side], Some(cw.x))
            }
            Behavior::Jaywalking => {
                let xi = self.config.map.intersection_at;
                let zone = pc.jaywalk_zone;
                let tx = xi + rng.random_range(-zone..=zone);
                let gx = tx + dir * rng.random_range(5.0..=25.0);
                (Phase::Approach { x: tx }, [gx, far_side], None)
            }
        };
        let first = match phase {
            Phase::Approach { x: tx } => [tx, y],
            _ => goal,
        };
        let heading = (first[1] - y).atan2(first[0] - x);
        let id = self.next_id;
        self.next_id += 1;
        self.pedestrians.push(Pedestrian {
            id,
            position: [x, y],
            heading,
            speed: desired_speed,
            desired_speed,
            behavior,
            goal,
            phase,
            crosswalk,
        });
    }

    /// Rectangle (ego footprint) vs disc (pedestrian) overlap.
    pub fn overlaps_ego(&self, p: [f64; 2]) -> bool {
        let (dx, dy) = self.to_ego_frame(p);
        let cx = dx.clamp(-0.5 * self.ego.length, 0.5 * self.ego.length);
        let cy = dy.clamp(-0.5 * self.ego.width, 0.5 * self.ego.width);
        let r = self.config.pedestrians.radius;
        (dx - cx).powi(2) + (dy - cy).powi(2) <= r * r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(seed: u64) -> WorldState {
        WorldState::reset(&ScenarioConfig::walking_speed(), seed).unwrap()
    }

    #[test]
    fn reset_places_ego_and_ten_pedestrians() {
        let w = world(0);
        assert_eq!(w.ego.s, 0.0);
        assert_eq!(w.ego.speed, 0.0);
        assert_eq!(w.pedestrians.len(), 10);
        for p in &w.pedestrians {
            assert!((0.0..=35.0).contains(&p.position[0]));
        }
        assert_eq!(w.status(), EpisodeStatus::Running);
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(world(11), world(11));
        assert_ne!(world(11), world(12));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = ScenarioConfig::default();
        c.map.route_length = -1.0;
        assert!(matches!(WorldState::reset(&c, 0), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn coasting_at_rest_stays_put() {
        let mut w = world(1);
        w.step(Actuation::COAST).unwrap();
        assert_eq!((w.ego.s, w.ego.speed), (0.0, 0.0));
    }

    #[test]
    fn full_throttle_for_one_second() {
        let mut w = world(1);
        w.pedestrians.clear();
        w.config = Arc::new(ScenarioConfig {
            pedestrians: crate::sim::PedestrianConfig { count: 1, ..w.config.pedestrians.clone() },
            ..(*w.config).clone()
        });
        let full = Actuation { throttle: 1.0, brake: 0.0 };
        for _ in 0..10 {
            w.step(full).unwrap();
        }
        assert!((w.ego.speed - 2.9).abs() < 1e-12, "{}", w.ego.speed);
    }

    #[test]
    fn pedestrian_on_footprint_collides() {
        let mut w = world(2);
        let mut p = Pedestrian::standing(99, [0.5, 0.3], Behavior::Jaywalking);
        p.phase = Phase::Idle;
        w.pedestrians[0] = p;
        w.step(Actuation::COAST).unwrap();
        assert!(w.collided);
        assert_eq!(w.status(), EpisodeStatus::Collision);
        assert!(matches!(w.step(Actuation::COAST), Err(SimError::Terminal(EpisodeStatus::Collision))));
    }

    #[test]
    fn status_precedence() {
        let mut w = world(3);
        w.step = w.config.max_steps;
        assert_eq!(w.status(), EpisodeStatus::StepLimit);
        w.goal_reached = true;
        assert_eq!(w.status(), EpisodeStatus::Goal);
        w.collided = true;
        assert_eq!(w.status(), EpisodeStatus::Collision);
    }

    #[test]
    fn rejects_simultaneous_pedals() {
        let mut w = world(4);
        let both = Actuation { throttle: 0.5, brake: 0.5 };
        assert!(matches!(w.step(both), Err(SimError::Actuation(_))));
    }

    #[test]
    fn disc_touching_corner() {
        let w = world(5);
        // Front-left corner at (2.25, 1.0); a disc of radius 0.5 centered
        // 0.3 m out on each axis overlaps, 0.4 m does not.
        assert!(w.overlaps_ego([2.55, 1.3]));
        assert!(!w.overlaps_ego([2.65, 1.4]));
    }
}
