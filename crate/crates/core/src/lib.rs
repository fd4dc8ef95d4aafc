//! Simulation of an AlNiCo tunable-magnet actuator.
//!
//! The crate covers the magnet's hysteresis ([`hysteresis`]), the lumped
//! magnetic circuit ([`circuit`]), set-point prediction ([`prediction`]),
//! the coil/magnet plant ([`plant`]), the gap-flux PI loop
//! ([`controller`]), whole tuning cycles and campaigns ([`tuning`]) and
//! recovery of the BH characteristic from logs ([`characterization`]).

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterization;
pub mod circuit;
pub mod config;
pub mod controller;
pub mod error;
pub mod hysteresis;
pub mod plant;
pub mod prediction;
pub mod root;
pub mod tuning;

pub use circuit::CircuitParams;
pub use error::{Error, Result};
pub use hysteresis::{MagnetModel, MagnetState, MajorLoop, RecoilFit, RecoilModel, MU0};
pub use plant::{Plant, PlantState};
pub use tuning::{tune, Scenario, TuningResult};
