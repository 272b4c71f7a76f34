use serde::{Deserialize, Serialize};

use crate::units::kmh_to_mps;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedUnit {
    Kmh,
    Mps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub route_length: f64,
    /// Route arc-length of the crossing road's centerline.
    pub intersection_at: f64,
    pub lane_width: f64,
    pub lanes: u32,
    pub sidewalk_width: f64,
    pub crosswalk_width: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            route_length: 150.0,
            intersection_at: 75.0,
            lane_width: 3.5,
            lanes: 2,
            sidewalk_width: 2.0,
            crosswalk_width: 3.0,
        }
    }
}

impl MapConfig {
    pub fn road_half_width(&self) -> f64 {
        self.lane_width * self.lanes as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleConfig {
    pub length: f64,
    pub width: f64,
    /// Full-throttle acceleration, m/s^2.
    pub accel_max: f64,
    /// Full-brake deceleration, m/s^2.
    pub brake_max: f64,
    /// Deceleration from rolling resistance while moving, m/s^2.
    pub rolling_resistance: f64,
    /// Normalization speed for observations, km/h.
    pub max_speed_kmh: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 2.0,
            accel_max: 3.0,
            brake_max: 6.0,
            rolling_resistance: 0.1,
            max_speed_kmh: 20.0,
        }
    }
}

impl VehicleConfig {
    pub fn max_speed_mps(&self) -> f64 {
        kmh_to_mps(self.max_speed_kmh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PedestrianConfig {
    pub count: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub speed_unit: SpeedUnit,
    /// Probabilities of legal crossing, jaywalking, sidewalk-only.
    pub behavior_probs: [f64; 3],
    pub radius: f64,
    pub heading_noise_deg: f64,
    /// Initial pedestrians are placed this far ahead of the ego at most.
    pub spawn_ahead: f64,
    pub remove_behind: f64,
    pub remove_beyond: f64,
    pub respawn_min_ahead: f64,
    pub respawn_max_ahead: f64,
    /// Jaywalk trigger points lie within this distance of the intersection.
    pub jaywalk_zone: f64,
}

impl Default for PedestrianConfig {
    fn default() -> Self {
        Self {
            count: 10,
            speed_min: 0.5,
            speed_max: 1.5,
            speed_unit: SpeedUnit::Kmh,
            behavior_probs: [0.6, 0.2, 0.2],
            radius: 0.5,
            heading_noise_deg: 5.0,
            spawn_ahead: 35.0,
            remove_behind: 20.0,
            remove_beyond: 50.0,
            respawn_min_ahead: 15.0,
            respawn_max_ahead: 35.0,
            jaywalk_zone: 30.0,
        }
    }
}

impl PedestrianConfig {
    /// Desired-speed range in m/s.
    pub fn speed_range_mps(&self) -> (f64, f64) {
        match self.speed_unit {
            SpeedUnit::Kmh => (kmh_to_mps(self.speed_min), kmh_to_mps(self.speed_max)),
            SpeedUnit::Mps => (self.speed_min, self.speed_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub dt: f64,
    pub max_steps: u32,
    pub ttc_horizon: f64,
    /// Half-width of the lateral corridor around the route used for TTC.
    pub ttc_corridor: f64,
    pub map: MapConfig,
    pub vehicle: VehicleConfig,
    pub pedestrians: PedestrianConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_steps: 1000,
            ttc_horizon: 10.0,
            ttc_corridor: 2.5,
            map: MapConfig::default(),
            vehicle: VehicleConfig::default(),
            pedestrians: PedestrianConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Default scenario with pedestrian speeds read as 0.5-1.5 m/s.
    pub fn walking_speed() -> Self {
        let mut c = Self::default();
        c.pedestrians.speed_unit = SpeedUnit::Mps;
        c
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        let m = &self.map;
        let v = &self.vehicle;
        let p = &self.pedestrians;
        if !(self.dt > 0.0) || self.max_steps == 0 {
            return bad("dt and max_steps must be positive");
        }
        if !(self.ttc_horizon > 0.0) || !(self.ttc_corridor > 0.0) {
            return bad("ttc horizon and corridor must be positive");
        }
        if !(m.route_length > 0.0) || !(m.lane_width > 0.0) || m.lanes == 0 {
            return bad("route length, lane width and lane count must be positive");
        }
        if !(m.sidewalk_width > 0.4) || !(m.crosswalk_width > 0.4) {
            return bad("sidewalk and crosswalk must be wider than 0.4 m");
        }
        if !(0.0..=m.route_length).contains(&m.intersection_at) {
            return bad("intersection must lie on the route");
        }
        if !(v.length > 0.0) || !(v.width > 0.0) {
            return bad("vehicle footprint must be positive");
        }
        if !(v.accel_max > 0.0) || !(v.brake_max > 0.0) || v.rolling_resistance < 0.0 {
            return bad("vehicle authority must be positive and resistance non-negative");
        }
        if !(v.max_speed_kmh > 0.0) {
            return bad("max speed must be positive");
        }
        if p.count == 0 {
            return bad("pedestrian count must be positive");
        }
        if !(p.speed_min > 0.0) || p.speed_max < p.speed_min {
            return bad("pedestrian speed range must satisfy 0 < min <= max");
        }
        let total: f64 = p.behavior_probs.iter().sum();
        if p.behavior_probs.iter().any(|x| *x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return bad("behavior probabilities must be non-negative and sum to 1");
        }
        if !(p.radius > 0.0) || p.heading_noise_deg < 0.0 {
            return bad("pedestrian radius must be positive and heading noise non-negative");
        }
        if !(p.spawn_ahead > 0.0) || !(p.respawn_min_ahead >= 0.0) || p.respawn_max_ahead < p.respawn_min_ahead {
            return bad("spawn distances must be ordered and non-negative");
        }
        if p.remove_beyond <= p.respawn_max_ahead {
            return bad("removal radius must exceed the respawn distance");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::walking_speed().validate().unwrap();
    }

    #[test]
    fn literal_speed_range_is_kmh() {
        let (lo, hi) = ScenarioConfig::default().pedestrians.speed_range_mps();
        assert!((lo - 0.5 / 3.6).abs() < 1e-12 && (hi - 1.5 / 3.6).abs() < 1e-12);
        assert_eq!(ScenarioConfig::walking_speed().pedestrians.speed_range_mps(), (0.5, 1.5));
    }

    #[test]
    fn rejects_bad_probabilities() {
        let mut c = ScenarioConfig::default();
        c.pedestrians.behavior_probs = [0.5, 0.2, 0.2];
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn toml_round_trip_with_partial_file() {
        let c: ScenarioConfig = toml::from_str("max_steps = 300\n[pedestrians]\nspeed_unit = \"mps\"\n").unwrap();
        assert_eq!(c.max_steps, 300);
        assert_eq!(c.pedestrians.speed_unit, SpeedUnit::Mps);
        assert_eq!(c.map, MapConfig::default());
        let text = toml::to_string(&c).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
