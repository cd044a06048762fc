//! Experiment drivers and configuration for the fractional MGRIT solver.

pub mod config;
pub mod experiments;
