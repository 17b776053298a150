//! Synthetic data generators, CSV ingestion and the experiment runner behind
//! the `mgp` command-line tool.

pub mod config;
pub mod csvio;
pub mod data;
pub mod error;
pub mod experiment;
pub mod models;

pub use error::{BenchError, Result};
