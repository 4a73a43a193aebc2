//! Longitudinal disease-progression forecasting.
//!
//! The crate covers the whole pipeline: cohort rules and synthetic cohort
//! generation, visit tokenization with missingness masks, a horizon-conditioned
//! transformer encoder with hand-written reverse-mode gradients, dataset
//! expansion training, and pseudo-test-set evaluation.

pub mod cohort;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod features;
pub mod model;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
