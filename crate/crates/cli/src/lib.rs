//! Experiment runner for the latent-optimised GAN laboratory: config
//! schema, checkpoint and metrics-log formats, plot emission, and the run
//! orchestration behind the `logan-lab` binary.

pub mod checkpoint;
pub mod config;
pub mod csvlog;
pub mod runner;
pub mod svg;
