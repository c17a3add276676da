//! Experiment runner for embedding graph alignment distillation.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;

pub use error::{CliError, Result};
