//! Active-vision workbench: viewpoint planning by entropy minimization over
//! a UKF localization belief, an episodic head-control environment on
//! synthetic camera frames, a double-DQN agent with prioritized replay,
//! and the matching evaluation harness.

pub mod belief;
pub mod camera;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod replay;
pub mod seed;
pub mod selftest;

pub use config::RunConfig;
pub use error::{Error, Result};
