//! Behavior-level decision making for an autonomous vehicle driving among
//! pedestrians: a deterministic urban simulator, an ego-centric grid
//! encoder, PID-actuated high-level actions, a recurrent double-DQN agent,
//! a rule-based baseline, and the train / evaluate / compare harness.

pub mod action;
pub mod agent;
pub mod baseline;
pub mod control;
pub mod env;
pub mod grid;
pub mod harness;
pub mod nn;
pub mod reward;
pub mod seeding;
pub mod sim;
pub mod units;
