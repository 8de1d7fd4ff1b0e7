//! Tactile contact-event toolkit: displacement fields, a synthetic event
//! corpus, event classifiers, the pixel-motion frame predictor, training and
//! evaluation, and a simulated reactive grasping harness.

pub mod dataset;
mod error;
pub mod eventnet;
pub mod field;
pub mod graspsim;
pub mod io;
mod parallel;
pub mod pixelmotion;
pub mod training;

pub use error::{Result, TevError};
