//! Robust optimal stopping from sample paths.

pub mod baseline_ls;
pub mod config;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod heuristic;
pub mod instance;
pub mod io;
pub mod maxflow;
pub mod pipeline;
pub mod policy;
pub mod reward;
pub mod scenarios;
pub mod selftest;
pub mod types;

pub use error::{Error, Result};
pub use instance::RobustInstance;
pub use types::{MeanEstimate, RewardMatrix, SamplePathSet, SigmaPolicy};
