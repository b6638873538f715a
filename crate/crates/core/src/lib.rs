//! Label-noise-aware linear classification on Gaussian mixtures, with the
//! large-dimensional predictions of its test performance.

pub mod classifier;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod multiclass;
pub mod noise;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
