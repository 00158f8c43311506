//! Discrete-time microsimulator of one signalized intersection, plus the
//! signal phase machinery and the rule-based safety model that watches it.
//!
//! The simulator models vehicle kinematics with a Krauss-style safe-velocity
//! rule, permitted-left gap acceptance, junction conflict points, and a
//! stress mechanism in which a configurable fraction of drivers ignore
//! conflicting vehicles already inside the junction. Everything is
//! deterministic per seed.

pub mod encode;
pub mod events;
pub mod geometry;
pub mod metrics;
pub mod safety;
pub mod scenario;
pub mod signal;
pub mod sim;

pub use geometry::{
    Approach, ConflictPoint, Geometry, Movement, MovementId, MovementKind, VehicleSpec,
};
pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum TrafficError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error("scenario parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown phase id {0}")]
    UnknownPhase(usize),
    #[error("unknown movement {0}")]
    UnknownMovement(String),
    #[error("numeric: {0}")]
    Nn(#[from] tsc_nn::NnError),
}

pub type Result<T> = std::result::Result<T, TrafficError>;
