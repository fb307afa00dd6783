//! Frame-by-frame tracking. [`StreamingTracker`] reuses cached correlation
//! features from the temporal memory buffer; [`ReferenceTracker`] recomputes
//! every feature in its sliding window and serves as the semantic oracle.

mod engine;
mod reference;
mod stream;

pub use engine::TrackState;
pub use reference::{run_reference, ReferenceRun, ReferenceTracker, WindowEmission};
pub use stream::StreamingTracker;

use std::ops::Range;

use crate::ema::InitMode;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPoint {
    pub t: u64,
    pub x: f64,
    pub y: f64,
}

impl QueryPoint {
    pub fn new(t: u64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPrediction {
    pub id: usize,
    pub position: [f64; 2],
    pub visible: bool,
    pub visibility: f32,
    pub confidence: f32,
}

/// Output for one frame: one record per active track, in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub frame: u64,
    pub tracks: Vec<TrackPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Temporal memory capacity T_B, in frames.
    pub buffer_capacity: usize,
    /// Refinement passes L per frame.
    pub refine_passes: usize,
    pub alpha: f64,
    pub init_mode: InitMode,
    pub visibility_threshold: f32,
    pub model: ModelConfig,
    /// Sliding-window length T_W for reference mode.
    pub window: usize,
    /// Sliding-window stride S for reference mode.
    pub stride: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 16,
            refine_passes: 1,
            alpha: crate::ema::DEFAULT_ALPHA,
            init_mode: InitMode::Ema,
            visibility_threshold: 0.5,
            model: ModelConfig::default(),
            window: 16,
            stride: 1,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.buffer_capacity < 2 {
            return bad(format!("buffer capacity {} < 2", self.buffer_capacity));
        }
        if self.refine_passes < 1 {
            return bad("refine_passes must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.visibility_threshold > 0.0 && self.visibility_threshold < 1.0) {
            return bad(format!(
                "visibility threshold {} outside (0, 1)",
                self.visibility_threshold
            ));
        }
        if self.window < 1 || self.stride < 1 || self.stride > self.window {
            return Err(Error::InvalidWindow {
                window: self.window,
                stride: self.stride,
            });
        }
        self.model.validate()
    }

    /// Short identifier of the settings that affect timing.
    pub fn fingerprint(&self) -> String {
        let m = &self.model;
        format!(
            "tb{}-l{}-{}-d{}-c{}-w{}-h{}-x{}-seed{}",
            self.buffer_capacity,
            self.refine_passes,
            m.backend,
            m.feature_dim,
            m.corr_dim,
            m.width,
            m.heads,
            m.depth,
            m.seed
        )
    }
}

/// Anything that consumes a frame stream and emits per-frame predictions.
pub trait FrameTracker {
    fn add_queries(&mut self, queries: &[QueryPoint]) -> Result<Range<usize>>;
    fn step(&mut self, frame: &Frame) -> Result<Prediction>;
}
