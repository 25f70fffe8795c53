//! Identity-shuffling GAN for disentangling person images into
//! identity-related and identity-unrelated features.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`dataset`]: Market/Celeb-style folder loaders, a procedural dataset with
//!   ground-truth factors, augmentation and P×K batch sampling.
//! - [`model`]: backbone, part encoders, generator and discriminators.
//! - [`disentangle`]: feature composition and part-level shuffling.
//! - [`losses`]: every training objective plus moving feature statistics.
//! - [`trainer`]: the three-stage schedule, optimisers and checkpoints.
//! - [`evaluator`]: retrieval metrics, linear probes, exports, image grids.
//! - [`config`] and [`cli`]: the JSON run configuration and commands.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod disentangle;
mod error;
mod fsutil;
pub mod evaluator;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
