//! Batch runner, studies and heatmap export for the grounding pipeline.

pub mod app;
pub mod cache;
pub mod config;
pub mod heatmap;
pub mod pipeline;
pub mod study;

pub use config::{BackendSpec, DecomposerSpec, Flags, RunConfig};
pub use pipeline::{run_pipeline, ConfigError, RunOutcome};
