//! Radiance-field core with a swappable representation color space.
//!
//! The field predicts color in a *representation space* (linear, sRGB gamma,
//! GPLog, TrueLog or a scaled log). The renderer maps every sample back to
//! linear RGB before compositing and encodes the composited pixel as sRGB,
//! so the loss is always computed against sRGB ground truth while the
//! representation the network learns can be swapped freely.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! experiment runner live in the companion `radlog-lab` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bidr;
pub mod colorspace;
mod error;
pub mod field;
pub mod math;
pub mod metrics;
pub mod render;
pub mod train;

pub use error::{Error, Result};
