//! Dataset IO, checkpoints, reports and the experiment harness around
//! `radlog-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
mod error;
pub mod fsutil;
pub mod harness;
pub mod imageio;
pub mod report;
pub mod svg;

pub use error::{LabError, Result};
