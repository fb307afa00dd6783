//! Streaming long-term point tracking with a temporal feature cache and
//! exponential-moving-average flow initialization.
//!
//! The pipeline per frame: extract a feature pyramid, seed every track from its
//! motion history, correlate the current patch against the frozen query patch,
//! push the correlation features into a ring buffer and refine the current
//! estimates from the buffered tokens.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod buffer;
pub mod config;
pub mod ema;
mod error;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use frame::Frame;
