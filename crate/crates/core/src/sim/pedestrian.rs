use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::StaticMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    LegalCrossing,
    Jaywalking,
    SidewalkOnly,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::LegalCrossing, Behavior::Jaywalking, Behavior::SidewalkOnly];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Behavior::LegalCrossing => "legal-crossing",
            Behavior::Jaywalking => "jaywalking",
            Behavior::SidewalkOnly => "sidewalk-only",
        }
    }

    /// Whether the pedestrian will cross the ego's road at some point.
    pub fn crosses(self) -> bool {
        self != Behavior::SidewalkOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    /// Walking along the sidewalk to `x`, where the crossing starts.
    Approach { x: f64 },
    /// On the road, heading for the far sidewalk band center `y`.
    Crossing { y: f64 },
    ToGoal,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub id: u64,
    pub position: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub desired_speed: f64,
    pub behavior: Behavior,
    pub goal: [f64; 2],
    pub phase: Phase,
    /// Lateral span `[x0, x1)` a legal crosser must stay within on the road.
    pub crosswalk: Option<(f64, f64)>,
}

impl Pedestrian {
    /// A pedestrian standing still at `position`.
    pub fn standing(id: u64, position: [f64; 2], behavior: Behavior) -> Self {
        Self {
            id,
            position,
            heading: 0.0,
            speed: 0.0,
            desired_speed: 0.0,
            behavior,
            goal: position,
            phase: Phase::Idle,
            crosswalk: None,
        }
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }
}

/// Distance within which a waypoint counts as reached.
fn reach(step: f64) -> f64 {
    step.max(0.05)
}

/// Advances one pedestrian by `dt`. Motion is at the desired speed along the
/// heading toward the current sub-target plus Gaussian heading noise
/// (`heading_noise` is the standard deviation in radians). Sidewalk phases
/// are clamped to the sidewalk band, legal crossers to their crosswalk span,
/// and everything to the map bounds.
pub fn pedestrian_step<R: Rng + ?Sized>(
    p: &Pedestrian,
    map: &StaticMap,
    rng: &mut R,
    dt: f64,
    heading_noise: f64,
) -> Pedestrian {
    let mut q = p.clone();
    let step = q.desired_speed * dt;
    let near = reach(step);
    let side = if q.position[1] >= 0.0 { 1.0 } else { -1.0 };

    // Phase transitions happen before moving so a reached waypoint never
    // costs a wasted step.
    loop {
        match q.phase {
            Phase::Approach { x } if (q.position[0] - x).abs() <= near => {
                q.phase = Phase::Crossing { y: map.sidewalk_center(-side) };
            }
            Phase::Crossing { y } if (q.position[1] - y).abs() <= near => q.phase = Phase::ToGoal,
            Phase::ToGoal if dist(q.position, q.goal) <= near => q.phase = Phase::Idle,
            _ => break,
        }
    }

    let target = match q.phase {
        Phase::Approach { x } => [x, map.sidewalk_center(side)],
        Phase::Crossing { y } => [q.position[0], y],
        Phase::ToGoal => q.goal,
        Phase::Idle => {
            q.speed = 0.0;
            return q;
        }
    };
    let aim = (target[1] - q.position[1]).atan2(target[0] - q.position[0]);
    let noise = if heading_noise > 0.0 {
        Normal::new(0.0, heading_noise).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    q.heading = crate::units::wrap_angle(aim + noise);
    q.speed = q.desired_speed;
    let mut next = [
        q.position[0] + step * q.heading.cos(),
        q.position[1] + step * q.heading.sin(),
    ];

    match q.phase {
        Phase::Crossing { .. } => {
            if let Some((x0, x1)) = q.crosswalk {
                next[0] = next[0].clamp(x0 + 0.1, x1 - 0.1);
            }
        }
        _ => {
            let inner = map.road_half_width() + 0.1;
            let outer = map.road_half_width() + map.sidewalk_width() - 0.1;
            let s = if next[1] >= 0.0 { 1.0 } else { -1.0 };
            next[1] = s * next[1].abs().clamp(inner, outer);
        }
    }
    q.position = map.clamp_to_bounds(next);
    q
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
