use serde::{Deserialize, Serialize};

use crate::sim::{min_ttc, WorldState};
use crate::units::kmh_to_mps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub collision: f64,
    /// Pedestrians with TTC at or below this many seconds count as a near collision.
    pub ttc_threshold: f64,
    pub v_ref_kmh: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            collision: -10.0,
            ttc_threshold: 3.0,
            v_ref_kmh: 15.0,
        }
    }
}

impl RewardConfig {
    pub fn v_ref_mps(&self) -> f64 {
        kmh_to_mps(self.v_ref_kmh)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_ref_kmh > 0.0) || !(self.ttc_threshold > 0.0) || !self.collision.is_finite() {
            return Err("reward v_ref and TTC threshold must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardCase {
    Collision,
    NearCollision,
    Speed,
}

impl RewardCase {
    pub fn name(self) -> &'static str {
        match self {
            RewardCase::Collision => "collision",
            RewardCase::NearCollision => "near-collision",
            RewardCase::Speed => "speed",
        }
    }
}

/// Speed term: linear up to `v_ref`, -1 when stopped, -0.5 above `v_ref`.
pub fn speed_reward(v: f64, v_ref: f64) -> f64 {
    if v <= 0.0 {
        -1.0
    } else if v <= v_ref {
        1.0 - (v_ref - v) / v_ref
    } else {
        -0.5
    }
}

/// Collision beats near collision beats the speed term.
pub fn reward_from(collided: bool, min_ttc: Option<f64>, v: f64, cfg: &RewardConfig) -> (f64, RewardCase) {
    if collided {
        return (cfg.collision, RewardCase::Collision);
    }
    match min_ttc {
        Some(t) if t <= cfg.ttc_threshold => (t - cfg.ttc_threshold, RewardCase::NearCollision),
        _ => (speed_reward(v, cfg.v_ref_mps()), RewardCase::Speed),
    }
}

/// Reward for the post-step world given its TTC list.
pub fn compute_reward(world: &WorldState, ttc: &[(u64, f64)], cfg: &RewardConfig) -> (f64, RewardCase) {
    reward_from(world.collided, min_ttc(ttc), world.ego.speed, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn collision_dominates() {
        assert_eq!(reward_from(true, Some(0.1), 3.0, &cfg()), (-10.0, RewardCase::Collision));
    }

    #[test]
    fn near_collision_values() {
        assert_eq!(reward_from(false, Some(1.0), 3.0, &cfg()).0, -2.0);
        assert_eq!(reward_from(false, Some(3.0), 3.0, &cfg()), (0.0, RewardCase::NearCollision));
        assert_eq!(reward_from(false, Some(3.01), 0.0, &cfg()), (-1.0, RewardCase::Speed));
    }

    #[test]
    fn speed_values() {
        let v = cfg().v_ref_mps();
        assert_eq!(speed_reward(v, v), 1.0);
        assert!((speed_reward(v / 2.0, v) - 0.5).abs() < 1e-12);
        assert_eq!(speed_reward(0.0, v), -1.0);
        assert_eq!(speed_reward(1.2 * v, v), -0.5);
    }

    proptest::proptest! {
        #[test]
        fn bounded(collided: bool, ttc in proptest::option::of(0.0f64..20.0), v in 0.0f64..10.0) {
            let (r, _) = reward_from(collided, ttc, v, &cfg());
            proptest::prop_assert!((-10.0..=1.0).contains(&r));
        }

        #[test]
        fn monotone_in_ttc(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(reward_from(false, Some(lo), 1.0, &cfg()).0 <= reward_from(false, Some(hi), 1.0, &cfg()).0);
        }

        #[test]
        fn monotone_in_speed(a in 1e-6f64..4.16, b in 1e-6f64..4.16) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let v_ref = cfg().v_ref_mps();
            proptest::prop_assert!(speed_reward(lo, v_ref) <= speed_reward(hi, v_ref));
        }
    }
}
