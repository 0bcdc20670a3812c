//! Continual model-based reinforcement learning on analytic planar
//! manipulation tasks. A task-conditional hypernetwork generates the weights
//! of a per-task dynamics model, a cross-entropy-method planner acts through
//! the learned model, and several continual-learning baselines share the same
//! training loop for comparison.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod hypernet;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod planner;
pub mod report;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
