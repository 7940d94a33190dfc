//! Annotation schema, unification pipeline, metrics, configuration and
//! synthetic data for multi-person gaze following and social gaze.

pub mod annotations;
pub mod clips;
pub mod config;
pub mod error;
pub mod frames;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod predictions;
pub mod sampling;
pub mod source;
pub mod stats;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
