use std::ops::Range;

use crate::buffer::{RowEntry, StateSnapshot, TemporalMemoryBuffer, TokenBlock};
use crate::error::Result;
use crate::frame::Frame;
use crate::model::{FeaturePyramid, ModelParams};
use crate::tracker::engine::{Engine, TrackState, Window};
use crate::tracker::{FrameTracker, Prediction, QueryPoint, TrackerConfig};

impl Window for TemporalMemoryBuffer {
    fn begin(&mut self, frame: u64, _pyramid: &FeaturePyramid, row: Vec<RowEntry>) -> Result<()> {
        self.push(frame, row).map(|_| ())
    }

    fn block(&mut self, _tracks: &[TrackState], _params: &ModelParams) -> Result<TokenBlock> {
        self.assemble(None)
    }

    fn replace(&mut self, track: usize, entry: RowEntry) -> Result<()> {
        self.overwrite_latest(track, entry)
    }

    fn finish(&mut self, snapshots: &[Option<StateSnapshot>]) -> Result<()> {
        for (j, snap) in snapshots.iter().enumerate() {
            if let Some(s) = snap {
                self.update_latest_state(j, s.position, s.visibility, s.confidence)?;
            }
        }
        Ok(())
    }

    fn add_tracks(&mut self, count: usize) -> Result<()> {
        TemporalMemoryBuffer::add_tracks(self, count).map(|_| ())
    }
}

/// Frame-by-frame tracker that reuses cached correlation features.
#[derive(Debug, Clone)]
pub struct StreamingTracker {
    engine: Engine,
    buffer: TemporalMemoryBuffer,
}

impl StreamingTracker {
    pub fn new(config: TrackerConfig, width: usize, height: usize) -> Result<Self> {
        let buffer = TemporalMemoryBuffer::new(config.buffer_capacity, config.model.corr_dim)?;
        Ok(Self {
            engine: Engine::new(config, width, height)?,
            buffer,
        })
    }

    pub fn add_queries(&mut self, queries: &[QueryPoint]) -> Result<Range<usize>> {
        self.engine.add_queries(queries, &mut self.buffer)
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Prediction> {
        self.engine.step(frame, &mut self.buffer)
    }

    pub fn buffer(&self) -> &TemporalMemoryBuffer {
        &self.buffer
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.engine.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.engine.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.engine.params
    }
}

impl FrameTracker for StreamingTracker {
    fn add_queries(&mut self, queries: &[QueryPoint]) -> Result<Range<usize>> {
        StreamingTracker::add_queries(self, queries)
    }

    fn step(&mut self, frame: &Frame) -> Result<Prediction> {
        StreamingTracker::step(self, frame)
    }
}
