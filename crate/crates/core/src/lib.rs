//! Radar-centric dynamic occupancy grid mapping.
//!
//! A scan of radar detections (map-frame position, ego-compensated range rate,
//! RCS) is turned into an ego-centered four-state grid (unknown, free, static,
//! dynamic) plus a particle population carrying the velocity field. Moving
//! objects are extracted by clustering particles in dynamic cells.
//!
//! Pipeline per scan, see [`fusion::Pipeline::step`]:
//! recenter, predict, classify cells, build the measurement grid, correct,
//! fuse, flag false-static cells, spawn/update/resample particles, and
//! normalize.

pub mod config;
pub mod correction;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod ism;
pub mod measurement;
pub mod model;
pub mod particles;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{CellState, GridMap, GridSpec, Particle, Pose, RadarDetection, Scan, SensorConfig, State};
