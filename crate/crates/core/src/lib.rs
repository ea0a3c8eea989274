//! Adversarial unsupervised domain adaptation with an informative,
//! class-labeled discriminator.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`]: reverse-mode differentiation engine, gradient reversal and momentum SGD.
//! * [`model`]: feature extractor, classifier and discriminator with all discriminator variants.
//! * [`data`]: synthetic domain-shift generators, IDX digit loading and blended color targets.
//! * [`train`]: joint adversarial objective, batching, checkpoints and evaluation.
//! * [`analysis`]: proxy A-distance, H-divergence bound checks, rank statistics, sweeps.
//! * [`experiment`]: benchmark definitions and multi-seed runners shared by the CLI and tests.

pub mod analysis;
pub mod autodiff;
pub mod container;
pub mod data;
mod error;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
