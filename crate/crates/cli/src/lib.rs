//! Configuration-driven orchestration of the kernel-learning pipeline.

pub mod config;
pub mod stages;

pub use config::PipelineConfig;
pub use stages::{pipeline, run_stage, Stage};
