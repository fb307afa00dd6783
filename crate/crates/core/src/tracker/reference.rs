use std::collections::VecDeque;
use std::ops::{Range, RangeInclusive};
use std::time::{Duration, Instant};

use crate::buffer::{RowEntry, StateSnapshot, TokenBlock};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::{correlation_feature, sample_patch_features, FeaturePyramid, ModelParams};
use crate::tracker::engine::{Engine, TrackState, Window};
use crate::tracker::{FrameTracker, Prediction, QueryPoint, TrackerConfig};

#[derive(Debug, Clone)]
struct PastFrame {
    frame: u64,
    pyramid: FeaturePyramid,
    /// Final state per track id registered at that time; `None` before the query frame.
    snapshots: Vec<Option<StateSnapshot>>,
}

#[derive(Debug, Clone)]
struct CurrentFrame {
    frame: u64,
    pyramid: FeaturePyramid,
    row: Vec<RowEntry>,
}

/// Keeps the pyramids of the last `window - 1` frames and rebuilds every
/// correlation feature of the window whenever a token block is requested.
#[derive(Debug, Clone)]
struct RecomputeWindow {
    window: usize,
    num_tracks: usize,
    corr_dim: usize,
    past: VecDeque<PastFrame>,
    current: Option<CurrentFrame>,
}

impl RecomputeWindow {
    fn push_past(block: &mut TokenBlock, frame: &PastFrame, tracks: &[TrackState], params: &ModelParams) -> Result<()> {
        block.frames.push(frame.frame);
        for (j, track) in tracks.iter().enumerate() {
            match frame.snapshots.get(j).copied().flatten() {
                Some(snap) => {
                    let query = track.query_patch().expect("track observed in a past frame is active");
                    let patch = sample_patch_features(&frame.pyramid, snap.sample_loc)?;
                    let feature = correlation_feature(query, &patch, params)?;
                    block.features.extend_from_slice(&feature.values);
                    block.snapshots.push(snap);
                    block.valid.push(true);
                }
                None => push_proxy(block),
            }
        }
        Ok(())
    }

    fn empty_block(&self, slots: usize) -> TokenBlock {
        TokenBlock {
            frames: Vec::with_capacity(slots),
            num_tracks: self.num_tracks,
            corr_dim: self.corr_dim,
            features: Vec::with_capacity(slots * self.num_tracks * self.corr_dim),
            snapshots: Vec::with_capacity(slots * self.num_tracks),
            valid: Vec::with_capacity(slots * self.num_tracks),
        }
    }

    /// Recomputed block over the retained past frames only (newest last).
    fn recompute_past(&self, tracks: &[TrackState], params: &ModelParams) -> Result<TokenBlock> {
        let mut block = self.empty_block(self.past.len());
        for frame in &self.past {
            Self::push_past(&mut block, frame, tracks, params)?;
        }
        Ok(block)
    }
}

fn push_proxy(block: &mut TokenBlock) {
    block.features.extend(std::iter::repeat_n(0.0, block.corr_dim));
    block.snapshots.push(StateSnapshot::default());
    block.valid.push(false);
}

impl Window for RecomputeWindow {
    fn begin(&mut self, frame: u64, pyramid: &FeaturePyramid, row: Vec<RowEntry>) -> Result<()> {
        self.current = Some(CurrentFrame {
            frame,
            pyramid: pyramid.clone(),
            row,
        });
        Ok(())
    }

    fn block(&mut self, tracks: &[TrackState], params: &ModelParams) -> Result<TokenBlock> {
        let current = self.current.as_ref().ok_or(Error::EmptyBuffer)?;
        let mut block = self.empty_block(self.past.len() + 1);
        for frame in &self.past {
            Self::push_past(&mut block, frame, tracks, params)?;
        }
        block.frames.push(current.frame);
        for entry in &current.row {
            match entry {
                RowEntry::Proxy => push_proxy(&mut block),
                RowEntry::Observed { features, snapshot } => {
                    block.features.extend_from_slice(features);
                    block.snapshots.push(*snapshot);
                    block.valid.push(true);
                }
            }
        }
        Ok(block)
    }

    fn replace(&mut self, track: usize, entry: RowEntry) -> Result<()> {
        let current = self.current.as_mut().ok_or(Error::EmptyBuffer)?;
        current.row[track] = entry;
        Ok(())
    }

    fn finish(&mut self, snapshots: &[Option<StateSnapshot>]) -> Result<()> {
        let current = self.current.take().ok_or(Error::EmptyBuffer)?;
        self.past.push_back(PastFrame {
            frame: current.frame,
            pyramid: current.pyramid,
            snapshots: snapshots.to_vec(),
        });
        while self.past.len() >= self.window {
            self.past.pop_front();
        }
        Ok(())
    }

    fn add_tracks(&mut self, count: usize) -> Result<()> {
        self.num_tracks += count;
        Ok(())
    }
}

/// Sliding-window tracker with stride 1 and no feature cache: every step
/// recomputes the correlation features of all `window` frames.
#[derive(Debug, Clone)]
pub struct ReferenceTracker {
    engine: Engine,
    window: RecomputeWindow,
}

impl ReferenceTracker {
    /// Uses `config.window` as the window length.
    pub fn new(config: TrackerConfig, width: usize, height: usize) -> Result<Self> {
        let window = RecomputeWindow {
            window: config.window,
            num_tracks: 0,
            corr_dim: config.model.corr_dim,
            past: VecDeque::new(),
            current: None,
        };
        Ok(Self {
            engine: Engine::new(config, width, height)?,
            window,
        })
    }

    pub fn add_queries(&mut self, queries: &[QueryPoint]) -> Result<Range<usize>> {
        self.engine.add_queries(queries, &mut self.window)
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Prediction> {
        self.engine.step(frame, &mut self.window)
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.engine.tracks
    }

    /// Block over the most recent processed frames, rebuilt from stored frames.
    /// Matches what a streaming tracker's buffer holds after the same frames.
    pub fn recomputed_block(&self) -> Result<TokenBlock> {
        if self.window.past.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        self.window.recompute_past(&self.engine.tracks, &self.engine.params)
    }
}

impl FrameTracker for ReferenceTracker {
    fn add_queries(&mut self, queries: &[QueryPoint]) -> Result<Range<usize>> {
        ReferenceTracker::add_queries(self, queries)
    }

    fn step(&mut self, frame: &Frame) -> Result<Prediction> {
        ReferenceTracker::step(self, frame)
    }
}

/// One release of predictions by the windowed reference.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEmission {
    /// Frame whose arrival triggered the release.
    pub emitted_at: u64,
    pub frames: RangeInclusive<u64>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub predictions: Vec<Prediction>,
    pub emissions: Vec<WindowEmission>,
}

/// Offline sliding-window run. Frames accumulate until `stride` of them are
/// pending (or the sequence ends); each release processes the pending frames
/// against windows of `window` frames with all features recomputed.
pub fn run_reference(
    frames: &[Frame],
    queries: &[QueryPoint],
    config: &TrackerConfig,
    window: usize,
    stride: usize,
) -> Result<ReferenceRun> {
    if stride < 1 || stride > window {
        return Err(Error::InvalidWindow { window, stride });
    }
    let first = frames.first().ok_or(Error::EmptyBuffer)?;
    let config = TrackerConfig {
        window,
        stride,
        ..config.clone()
    };
    let mut tracker = ReferenceTracker::new(config, first.width(), first.height())?;
    tracker.add_queries(queries)?;
    let mut run = ReferenceRun {
        predictions: Vec::with_capacity(frames.len()),
        emissions: Vec::new(),
    };
    let mut pending_start = 0usize;
    for (i, _) in frames.iter().enumerate() {
        let last = i + 1 == frames.len();
        if (i + 1) % stride != 0 && !last {
            continue;
        }
        let started = Instant::now();
        for frame in &frames[pending_start..=i] {
            run.predictions.push(tracker.step(frame)?);
        }
        run.emissions.push(WindowEmission {
            emitted_at: frames[i].index(),
            frames: frames[pending_start].index()..=frames[i].index(),
            elapsed: started.elapsed(),
        });
        pending_start = i + 1;
    }
    Ok(run)
}
