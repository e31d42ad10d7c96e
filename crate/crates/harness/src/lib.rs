//! Experiment engine for the elastography benchmark: scenario files, forward
//! runs with closed-loop inversion reports, resolution sweeps and field export.

pub mod archive;
pub mod config;
pub mod error;
pub mod scenario;
pub mod slice;
pub mod sweep;

pub use error::{HarnessError, Result};
