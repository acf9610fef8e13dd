//! Ray fields that model where radiance changes along a ray instead of a density
//! to integrate: a 1D convolutional encoder over the samples of each ray, a recurrent
//! head scoring each sample, and a tempered softmax that turns the scores into a
//! single-surface rendering weight, with an extra epipolar slot for empty rays.

pub mod commands;
pub mod config;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod linalg;
pub mod math;
pub mod model;
pub mod nn;
pub mod raygen;
pub mod renderer;
pub mod scene_io;
pub mod training;

pub use config::CerfConfig;
pub use error::{CerfError, Result};
