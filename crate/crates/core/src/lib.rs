//! Asynchronous federated AdaBoost.
//!
//! Clients train decision stumps on their own shards and buffer them
//! between synchronizations; the server folds stale learners into a global
//! ensemble with exponentially decayed weights and adapts how many local
//! rounds clients run between uploads from the trend of validation error.
//! A deterministic discrete-event simulator compares this against a
//! barrier-synchronized baseline.

pub mod boost;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod stump;

pub use config::{parse_config, preset, ExperimentConfig, Mode};
pub use error::{Error, Result};
pub use sim::{mode_synchronous_baseline, run_simulation, SimTrace, Simulation};
