//! Differentiable voxel rendering and self-supervised viewpoint estimation.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evalkit;
pub mod geometry;
pub mod renderer;
pub mod volume;

pub use error::{Error, Result};
