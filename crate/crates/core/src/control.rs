//! High-level action to desired speed, and the longitudinal PID speed loop
//! that turns desired speed into throttle / brake.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::units::kmh_to_mps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the integral term, m/s^2.
    pub integral_clamp: f64,
    /// Desired-speed ceiling, km/h.
    pub ceiling_kmh: f64,
    /// Desired-speed change per accelerate / slow-down action, km/h.
    pub action_step_kmh: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.1,
            kd: 0.05,
            integral_clamp: 0.2,
            ceiling_kmh: 20.0,
            action_step_kmh: 1.0,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), String> {
        let gains_ok = [self.kp, self.ki, self.kd, self.integral_clamp]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0);
        if !gains_ok {
            return Err("PID gains and integral clamp must be finite and >= 0".into());
        }
        if !(self.ceiling_kmh > 0.0) || !(self.action_step_kmh > 0.0) {
            return Err("desired-speed ceiling and action step must be positive".into());
        }
        Ok(())
    }
}

/// Desired speed in m/s, kept within `[0, ceiling]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredSpeed(f64);

impl DesiredSpeed {
    pub fn new(mps: f64, ceiling_mps: f64) -> Self {
        Self(mps.clamp(0.0, ceiling_mps))
    }

    pub fn zero() -> Self {
        Self(0.0)
    }

    pub fn mps(self) -> f64 {
        self.0
    }
}

/// Updates the desired speed for `action`. Brake leaves it unchanged; its
/// effect is the unconditional full brake in [`pid_to_actuation`].
pub fn apply_action(action: Action, v_d: DesiredSpeed, cfg: &PidConfig) -> DesiredSpeed {
    let step = kmh_to_mps(cfg.action_step_kmh);
    let ceiling = kmh_to_mps(cfg.ceiling_kmh);
    match action {
        Action::Accelerate => DesiredSpeed::new(v_d.0 + step, ceiling),
        Action::SlowDown => DesiredSpeed::new(v_d.0 - step, ceiling),
        Action::Steer | Action::Brake => v_d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    /// Already multiplied by `ki`, so it is in m/s^2.
    pub integral: f64,
    pub prev_error: Option<f64>,
}

impl PidState {
    pub fn new() -> Self {
        Self {
            integral: 0.0,
            prev_error: None,
        }
    }
}

impl Default for PidState {
    fn default() -> Self {
        Self::new()
    }
}

/// `u = kp*e + sum(ki*e*dt) + kd*de/dt` with `e = v_d - v`. The derivative
/// term is zero on the first call after a reset.
pub fn pid_acceleration(v_d: f64, v: f64, state: &mut PidState, cfg: &PidConfig, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let e = v_d - v;
    state.integral = (state.integral + cfg.ki * e * dt).clamp(-cfg.integral_clamp, cfg.integral_clamp);
    let derivative = state.prev_error.map_or(0.0, |prev| cfg.kd * (e - prev) / dt);
    state.prev_error = Some(e);
    cfg.kp * e + state.integral + derivative
}

/// Throttle and brake positions in `[0, 1]`; at most one is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub throttle: f64,
    pub brake: f64,
}

impl Actuation {
    pub const COAST: Actuation = Actuation {
        throttle: 0.0,
        brake: 0.0,
    };
    pub const FULL_BRAKE: Actuation = Actuation {
        throttle: 0.0,
        brake: 1.0,
    };
}

/// Maps commanded acceleration to pedals, normalized by the vehicle's
/// acceleration / braking authority so commanded and realized acceleration
/// agree. Brake bypasses the loop entirely.
pub fn pid_to_actuation(action: Action, u: f64, accel_max: f64, brake_max: f64) -> Actuation {
    if action == Action::Brake {
        return Actuation::FULL_BRAKE;
    }
    if u > 0.0 {
        Actuation {
            throttle: (u / accel_max).clamp(0.0, 1.0),
            brake: 0.0,
        }
    } else if u < 0.0 {
        Actuation {
            throttle: 0.0,
            brake: (-u / brake_max).clamp(0.0, 1.0),
        }
    } else {
        Actuation::COAST
    }
}

/// Per-episode controller: desired speed plus PID memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedController {
    pub config: PidConfig,
    pub desired: DesiredSpeed,
    pub pid: PidState,
}

/// One control tick, for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTick {
    pub desired_mps: f64,
    pub accel_cmd: f64,
    pub actuation: Actuation,
}

impl SpeedController {
    pub fn new(config: PidConfig) -> Self {
        Self {
            config,
            desired: DesiredSpeed::zero(),
            pid: PidState::new(),
        }
    }

    /// Applies `action` to the desired speed and computes pedals for the
    /// current speed `v`.
    pub fn tick(&mut self, action: Action, v: f64, dt: f64, accel_max: f64, brake_max: f64) -> ControlTick {
        self.desired = apply_action(action, self.desired, &self.config);
        if action == Action::Brake {
            return ControlTick {
                desired_mps: self.desired.mps(),
                accel_cmd: 0.0,
                actuation: Actuation::FULL_BRAKE,
            };
        }
        let u = pid_acceleration(self.desired.mps(), v, &mut self.pid, &self.config, dt);
        ControlTick {
            desired_mps: self.desired.mps(),
            accel_cmd: u,
            actuation: pid_to_actuation(action, u, accel_max, brake_max),
        }
    }

    /// Tracks a fixed desired speed (the rule baseline's mode).
    pub fn track(&mut self, target_mps: f64, v: f64, dt: f64, accel_max: f64, brake_max: f64) -> ControlTick {
        self.desired = DesiredSpeed::new(target_mps, kmh_to_mps(self.config.ceiling_kmh));
        let u = pid_acceleration(self.desired.mps(), v, &mut self.pid, &self.config, dt);
        ControlTick {
            desired_mps: self.desired.mps(),
            accel_cmd: u,
            actuation: pid_to_actuation(Action::Steer, u, accel_max, brake_max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mps_to_kmh;

    fn cfg() -> PidConfig {
        PidConfig::default()
    }

    fn kmh(v: f64) -> DesiredSpeed {
        DesiredSpeed::new(kmh_to_mps(v), kmh_to_mps(20.0))
    }

    #[test]
    fn accelerate_adds_one_kmh() {
        let v = apply_action(Action::Accelerate, kmh(10.0), &cfg());
        assert!((mps_to_kmh(v.mps()) - 11.0).abs() < 1e-9);
    }

    #[test]
    fn slow_down_clamps_at_zero() {
        assert_eq!(apply_action(Action::SlowDown, DesiredSpeed::zero(), &cfg()).mps(), 0.0);
    }

    #[test]
    fn steer_and_brake_keep_desired_speed() {
        assert_eq!(apply_action(Action::Steer, kmh(7.0), &cfg()), kmh(7.0));
        assert_eq!(apply_action(Action::Brake, kmh(7.0), &cfg()), kmh(7.0));
    }

    #[test]
    fn accelerate_clamps_at_ceiling() {
        let v = apply_action(Action::Accelerate, kmh(19.5), &cfg());
        assert!((mps_to_kmh(v.mps()) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn zero_error_fresh_state_gives_zero() {
        let mut s = PidState::new();
        assert_eq!(pid_acceleration(3.0, 3.0, &mut s, &cfg(), 0.1), 0.0);
    }

    #[test]
    fn proportional_only() {
        let c = PidConfig { kp: 1.0, ki: 0.0, kd: 0.0, ..cfg() };
        let mut s = PidState::new();
        assert_eq!(pid_acceleration(2.0, 1.0, &mut s, &c, 0.1), 1.0);
    }

    #[test]
    fn discrete_integral_hand_oracle() {
        let c = PidConfig { kp: 1.0, ki: 0.1, kd: 0.0, ..cfg() };
        let mut s = PidState::new();
        let mut u = 0.0;
        for _ in 0..10 {
            u = pid_acceleration(1.0, 0.0, &mut s, &c, 0.1);
        }
        // 1 + 0.1 * 1 * (10 * 0.1)
        assert!((u - 1.1).abs() < 1e-12);
    }

    #[test]
    fn integral_respects_clamp() {
        let mut s = PidState::new();
        for _ in 0..1000 {
            pid_acceleration(10.0, 0.0, &mut s, &cfg(), 0.1);
            assert!(s.integral.abs() <= cfg().integral_clamp);
        }
    }

    #[test]
    fn brake_action_is_full_brake_regardless_of_u() {
        for u in [-10.0, 0.0, 2.5, 100.0] {
            assert_eq!(pid_to_actuation(Action::Brake, u, 3.0, 6.0), Actuation::FULL_BRAKE);
        }
    }

    #[test]
    fn negative_command_maps_to_brake() {
        let a = pid_to_actuation(Action::Steer, -3.0, 3.0, 6.0);
        assert_eq!(a, Actuation { throttle: 0.0, brake: 0.5 });
        assert_eq!(pid_to_actuation(Action::Accelerate, 0.0, 3.0, 6.0), Actuation::COAST);
        let t = pid_to_actuation(Action::Accelerate, 1.5, 3.0, 6.0);
        assert_eq!(t, Actuation { throttle: 0.5, brake: 0.0 });
        assert_eq!(pid_to_actuation(Action::Steer, 30.0, 3.0, 6.0).throttle, 1.0);
    }

    proptest::proptest! {
        #[test]
        fn pedals_are_exclusive(u in -50.0f64..50.0, a in 0usize..4) {
            let act = pid_to_actuation(Action::ALL[a], u, 3.0, 6.0);
            proptest::prop_assert_eq!(act.throttle * act.brake, 0.0);
            proptest::prop_assert!((0.0..=1.0).contains(&act.throttle));
            proptest::prop_assert!((0.0..=1.0).contains(&act.brake));
        }

        #[test]
        fn apply_action_is_monotone(v in 0.0f64..25.0) {
            let d = kmh(v);
            proptest::prop_assert!(apply_action(Action::Accelerate, d, &cfg()).mps() >= d.mps());
            proptest::prop_assert!(apply_action(Action::SlowDown, d, &cfg()).mps() <= d.mps());
        }
    }
}
