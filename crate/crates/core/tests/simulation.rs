use std::sync::Arc;

use proptest::prelude::*;
use urban_drqn::action::Action;
use urban_drqn::baseline::{RuleConfig, RuleDriver};
use urban_drqn::control::{Actuation, PidConfig};
use urban_drqn::env::DrivingEnv;
use urban_drqn::grid::{encode, LAYERS};
use urban_drqn::reward::RewardConfig;
use urban_drqn::sim::{compute_ttc, Behavior, EpisodeStatus, Pedestrian, ScenarioConfig, StaticMap, WorldState};

fn pedal(u: f64) -> Actuation {
    if u >= 0.0 {
        Actuation { throttle: u, brake: 0.0 }
    } else {
        Actuation { throttle: 0.0, brake: -u }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn world_invariants_hold_along_random_drives(seed: u64, pedals in prop::collection::vec(-1.0f64..1.0, 1..300)) {
        let mut w = WorldState::reset(&ScenarioConfig::walking_speed(), seed).unwrap();
        let mut s_prev = w.ego.s;
        for u in pedals {
            if w.is_terminal() {
                break;
            }
            w.step(pedal(u)).unwrap();
            prop_assert_eq!(w.pedestrians.len(), 10);
            prop_assert!(w.ego.speed >= 0.0);
            prop_assert!(w.ego.s >= s_prev && w.ego.s <= 150.0);
            s_prev = w.ego.s;
            for (_, t) in compute_ttc(&w) {
                prop_assert!((0.0..=10.0).contains(&t));
            }
            let obs = encode(&w);
            prop_assert!(obs.cells().len() <= w.pedestrians.len());
            for (_, v) in obs.cells() {
                prop_assert_eq!(v[0], 1.0);
                prop_assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
            }
        }
    }

    #[test]
    fn grid_is_translation_equivariant(
        s in 20i32..40,
        shift in -20i32..40,
        offsets in prop::collection::vec((-600i32..2400, -1000i32..1000), 1..10),
    ) {
        // Positions on a 1/64 m lattice keep every subtraction exact.
        let place = |shift: i32| {
            let mut w = WorldState::reset(&ScenarioConfig::default(), 0).unwrap();
            w.ego.s = (s + shift) as f64;
            w.pedestrians = offsets
                .iter()
                .enumerate()
                .map(|(i, (dx, dy))| {
                    let x = w.ego.s + *dx as f64 / 64.0;
                    Pedestrian::standing(i as u64, [x, *dy as f64 / 64.0], Behavior::Jaywalking)
                })
                .collect();
            encode(&w)
        };
        let (a, b) = (place(0), place(shift));
        prop_assert_eq!(a.cells().len(), b.cells().len());
        for ((ia, va), (ib, vb)) in a.cells().iter().zip(b.cells()) {
            prop_assert_eq!(ia, ib);
            // The road-structure layer follows the static map, not the ego.
            prop_assert_eq!(&va[..LAYERS - 1], &vb[..LAYERS - 1]);
        }
    }
}

#[test]
fn same_seed_same_episode() {
    let run = || {
        let cfg = Arc::new(ScenarioConfig::walking_speed());
        let map = Arc::new(StaticMap::build(&cfg.map));
        let mut env = DrivingEnv::new(cfg, map, 17, PidConfig::default(), RewardConfig::default()).unwrap();
        let mut records = Vec::new();
        let cycle = [Action::Accelerate, Action::Accelerate, Action::Steer, Action::SlowDown];
        let mut i = 0;
        while env.status() == EpisodeStatus::Running {
            records.push(env.step_action(cycle[i % 4]).unwrap().record);
            i += 1;
        }
        records
    };
    assert_eq!(run(), run());
}

#[test]
fn rule_driver_finishes_every_episode() {
    let cfg = Arc::new(ScenarioConfig::walking_speed());
    let map = Arc::new(StaticMap::build(&cfg.map));
    for seed in 0..10 {
        let mut env = DrivingEnv::new(cfg.clone(), map.clone(), seed, PidConfig::default(), RewardConfig::default()).unwrap();
        let mut driver = RuleDriver::new(RuleConfig::default(), PidConfig::default());
        while env.status() == EpisodeStatus::Running {
            let (_, tick) = driver.act(&env.world);
            assert_eq!(tick.actuation.throttle * tick.actuation.brake, 0.0);
            env.step_control(tick, "rule").unwrap();
        }
        assert!(env.world.step <= cfg.max_steps);
        assert!(env.distance() >= 0.0 && env.distance() <= 150.0);
        if env.status() == EpisodeStatus::Goal {
            assert_eq!(env.distance(), 150.0);
        }
    }
}

#[test]
fn stepping_a_finished_world_is_an_error() {
    let mut cfg = ScenarioConfig::default();
    cfg.max_steps = 3;
    let mut w = WorldState::reset(&cfg, 1).unwrap();
    for _ in 0..3 {
        w.step(Actuation::COAST).unwrap();
    }
    assert_eq!(w.status(), EpisodeStatus::StepLimit);
    assert!(w.step(Actuation::COAST).is_err());
}
