//! Deterministic 2-D urban world: one straight route through a four-way
//! unsignalized intersection, ego longitudinal dynamics, and pedestrians
//! that walk sidewalks, use crosswalks, or jaywalk.

mod config;
mod map;
mod pedestrian;
mod ttc;
mod world;

pub use config::{MapConfig, PedestrianConfig, ScenarioConfig, SpeedUnit, VehicleConfig};
pub use map::{CellClass, Crosswalk, Route, StaticMap};
pub use pedestrian::{pedestrian_step, Behavior, Pedestrian, Phase};
pub use ttc::{compute_ttc, min_ttc};
pub use world::{EgoState, EpisodeStatus, WorldState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("step called on a terminal world ({0:?})")]
    Terminal(EpisodeStatus),
    #[error("invalid actuation: {0}")]
    Actuation(String),
}
