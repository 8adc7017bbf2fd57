//! Core library: synthetic polyphonic scenes, a differentiable log-mel
//! frontend, a small CNN sound classifier in three heads, integrated
//! gradients attribution, and frame-level localization metrics.

pub mod attrib;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod grad;
pub mod model;
pub mod scenegen;
pub mod wav;

pub use error::{Error, Result};
