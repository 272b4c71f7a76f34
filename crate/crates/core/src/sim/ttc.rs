use super::WorldState;

/// Time-to-collision per conflicting pedestrian.
///
/// The ego keeps its current speed along the route; each pedestrian keeps
/// its current velocity. TTC is the time at which the ego front reaches the
/// pedestrian's longitudinal position, kept only if the pedestrian is then
/// inside the lateral corridor and the time is within the horizon. A
/// stationary ego has no conflicts.
pub fn compute_ttc(world: &WorldState) -> Vec<(u64, f64)> {
    let cfg = &world.config;
    let v = world.ego.speed;
    if v <= 0.0 {
        return Vec::new();
    }
    let origin = world.ego_position();
    let h = world.ego_heading();
    let (t, n) = ([h.cos(), h.sin()], [-h.sin(), h.cos()]);
    let front = 0.5 * cfg.vehicle.length;
    let mut out = Vec::new();
    for p in &world.pedestrians {
        let rel = [p.position[0] - origin[0], p.position[1] - origin[1]];
        let dx = rel[0] * t[0] + rel[1] * t[1];
        let dy = rel[0] * n[0] + rel[1] * n[1];
        let pv = p.velocity();
        let vx = pv[0] * t[0] + pv[1] * t[1];
        let vy = pv[0] * n[0] + pv[1] * n[1];
        let closing = v - vx;
        if closing <= 0.0 {
            continue;
        }
        let ttc = (dx - front) / closing;
        if !(0.0..=cfg.ttc_horizon).contains(&ttc) {
            continue;
        }
        if (dy + vy * ttc).abs() <= cfg.ttc_corridor {
            out.push((p.id, ttc));
        }
    }
    out
}

pub fn min_ttc(ttc: &[(u64, f64)]) -> Option<f64> {
    ttc.iter().map(|(_, t)| *t).min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Behavior, Pedestrian, ScenarioConfig};

    fn world_with(ped: Pedestrian, ego_speed: f64) -> WorldState {
        let mut w = WorldState::reset(&ScenarioConfig::default(), 1).unwrap();
        w.ego.s = 20.0;
        w.ego.speed = ego_speed;
        w.pedestrians = vec![ped];
        w
    }

    #[test]
    fn stationary_pedestrian_ahead() {
        let front = 20.0 + 2.25;
        let w = world_with(Pedestrian::standing(7, [front + 10.0, 0.0], Behavior::Jaywalking), 5.0);
        let ttc = compute_ttc(&w);
        assert_eq!(ttc.len(), 1);
        assert_eq!(ttc[0].0, 7);
        assert!((ttc[0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_speed_halves_ttc() {
        let p = Pedestrian::standing(1, [35.0, 1.0], Behavior::Jaywalking);
        let a = compute_ttc(&world_with(p.clone(), 3.0))[0].1;
        let b = compute_ttc(&world_with(p, 6.0))[0].1;
        assert_eq!(a, 2.0 * b);
    }

    #[test]
    fn stopped_ego_has_no_conflicts() {
        let w = world_with(Pedestrian::standing(1, [25.0, 0.0], Behavior::Jaywalking), 0.0);
        assert!(compute_ttc(&w).is_empty());
    }

    #[test]
    fn parallel_sidewalk_walker_is_omitted() {
        let mut p = Pedestrian::standing(1, [30.0, 4.5], Behavior::SidewalkOnly);
        p.speed = 1.0;
        let w = world_with(p, 4.0);
        assert!(compute_ttc(&w).is_empty());
    }

    #[test]
    fn crossing_pedestrian_enters_corridor() {
        // Starts on the sidewalk, walks toward the road at 1.5 m/s.
        let mut p = Pedestrian::standing(1, [32.25, 4.5], Behavior::Jaywalking);
        p.speed = 1.5;
        p.heading = -std::f64::consts::FRAC_PI_2;
        let w = world_with(p, 5.0);
        let ttc = compute_ttc(&w);
        // TTC = 10 / 5 = 2 s, lateral position then 4.5 - 3 = 1.5 m.
        assert_eq!(ttc.len(), 1);
        assert!((ttc[0].1 - 2.0).abs() < 1e-12);
        assert_eq!(min_ttc(&ttc), Some(ttc[0].1));
    }
}
