//! Joint gaze-following and social-gaze network built on candle, with its
//! losses, training loop, checkpoints and inference.

pub mod batch;
pub mod checkpoint;
pub mod error;
pub mod infer;
pub mod interaction;
pub mod layers;
pub mod loss;
pub mod model;
pub mod params;
pub mod person;
pub mod prediction;
pub mod train;
pub mod vit;

pub use error::{ModelError, Result};
pub use model::{Inputs, ModelOutput, SocialGazeModel};
