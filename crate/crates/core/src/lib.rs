//! Sliding-window variational mode decomposition features feeding an LSTM
//! regressor, with the diagnostics and trend-accuracy evaluation needed to
//! compare it against a raw-series baseline.

pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod lstm;
pub mod pipeline;
pub mod swvmd;
pub mod synth;
pub mod vmd;

pub use error::{Error, ErrorClass, Result};
