//! Loss weighting for small diffusion models: noise schedules, SNR-based
//! weighting rules, min-norm multi-task weighting of timestep bins, a small
//! MLP denoiser with exact gradients, training diagnostics and samplers.

pub mod data;
pub mod denoiser;
pub mod error;
pub mod metrics;
pub mod pareto;
pub mod sampling;
pub mod schedule;
pub mod seed;
pub mod training;
pub mod weighting;

pub use error::{Error, Result};
