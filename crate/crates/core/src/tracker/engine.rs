use std::ops::Range;

use crate::buffer::{RowEntry, StateSnapshot, TokenBlock};
use crate::ema::MotionTracker;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::{
    correlate, extract_feature_pyramid, refine, sample_patch_features, FeaturePyramid, ModelParams, PatchFeatures,
    PATCH_AREA, SHIFT_MAPS_LEN,
};
use crate::tracker::{Prediction, QueryPoint, TrackPrediction, TrackerConfig};

/// Per-query state. Pending until its query frame has been processed.
#[derive(Debug, Clone)]
pub struct TrackState {
    pub id: usize,
    pub query: QueryPoint,
    pub position: [f64; 2],
    pub visibility: f32,
    pub confidence: f32,
    query_patch: Option<PatchFeatures>,
    motion: Option<MotionTracker>,
}

impl TrackState {
    pub fn is_active(&self) -> bool {
        self.query_patch.is_some()
    }

    pub fn query_patch(&self) -> Option<&PatchFeatures> {
        self.query_patch.as_ref()
    }

    pub fn flow(&self) -> Option<[f64; 2]> {
        self.motion.map(|m| m.state.flow)
    }
}

/// Source of the token block for the current frame: either the feature cache
/// or a full recomputation over retained frames.
pub(crate) trait Window {
    /// Starts a frame with the row computed at the initial locations.
    fn begin(&mut self, frame: u64, pyramid: &FeaturePyramid, row: Vec<RowEntry>) -> Result<()>;
    fn block(&mut self, tracks: &[TrackState], params: &ModelParams) -> Result<TokenBlock>;
    /// Swaps one track's entry in the current row between refinement passes.
    fn replace(&mut self, track: usize, entry: RowEntry) -> Result<()>;
    /// Closes the frame with the final per-track snapshots (`None` for pending tracks).
    fn finish(&mut self, snapshots: &[Option<StateSnapshot>]) -> Result<()>;
    /// Registers new track columns.
    fn add_tracks(&mut self, count: usize) -> Result<()>;
}

/// Shared per-frame logic for both tracker flavors.
#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub config: TrackerConfig,
    pub params: ModelParams,
    pub width: usize,
    pub height: usize,
    pub next_frame: u64,
    pub tracks: Vec<TrackState>,
}

impl Engine {
    pub fn new(config: TrackerConfig, width: usize, height: usize) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::new(&config.model)?;
        Ok(Self {
            config,
            params,
            width,
            height,
            next_frame: 0,
            tracks: Vec::new(),
        })
    }

    pub fn add_queries(&mut self, queries: &[QueryPoint], window: &mut impl Window) -> Result<Range<usize>> {
        for q in queries {
            if !(q.x >= 0.0 && q.x < self.width as f64 && q.y >= 0.0 && q.y < self.height as f64) {
                return Err(Error::QueryOutOfBounds {
                    t: q.t,
                    x: q.x,
                    y: q.y,
                    width: self.width,
                    height: self.height,
                });
            }
            if q.t < self.next_frame {
                return Err(Error::QueryInPast {
                    t: q.t,
                    next: self.next_frame,
                });
            }
        }
        let start = self.tracks.len();
        if queries.is_empty() {
            return Ok(start..start);
        }
        window.add_tracks(queries.len())?;
        self.tracks.extend(queries.iter().enumerate().map(|(i, q)| TrackState {
            id: start + i,
            query: *q,
            position: [q.x, q.y],
            visibility: 1.0,
            confidence: 1.0,
            query_patch: None,
            motion: None,
        }));
        Ok(start..self.tracks.len())
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.index() != self.next_frame {
            return Err(Error::NonConsecutiveFrame {
                expected: self.next_frame,
                actual: frame.index(),
            });
        }
        if frame.width() != self.width || frame.height() != self.height {
            return Err(Error::FrameSizeChanged {
                expected_w: self.width,
                expected_h: self.height,
                actual_w: frame.width(),
                actual_h: frame.height(),
            });
        }
        Ok(())
    }

    /// Correlates track `j` at its current position, writing its shift maps into `rows`.
    fn observe(&self, j: usize, pyramid: &FeaturePyramid, rows: &mut [f32]) -> Result<(RowEntry, StateSnapshot)> {
        let track = &self.tracks[j];
        let query = track.query_patch.as_ref().expect("observed track is active");
        let current = sample_patch_features(pyramid, track.position)?;
        let (feature, volume) = correlate(query, &current, &self.params)?;
        let maps = &mut rows[j * SHIFT_MAPS_LEN..(j + 1) * SHIFT_MAPS_LEN];
        for (l, dst) in maps.chunks_exact_mut(PATCH_AREA).enumerate() {
            dst.copy_from_slice(&volume.shift_map(l));
        }
        let snapshot = StateSnapshot {
            sample_loc: track.position,
            position: track.position,
            visibility: track.visibility,
            confidence: track.confidence,
        };
        let entry = RowEntry::Observed {
            features: feature.values,
            snapshot,
        };
        Ok((entry, snapshot))
    }

    pub fn step(&mut self, frame: &Frame, window: &mut impl Window) -> Result<Prediction> {
        self.check_frame(frame)?;
        let t = frame.index();
        let pyramid = extract_feature_pyramid(frame, &self.params)?;

        // tracks whose query frame is now
        for track in self.tracks.iter_mut().filter(|tr| tr.query.t == t) {
            let loc = [track.query.x, track.query.y];
            track.query_patch = Some(sample_patch_features(&pyramid, loc)?);
            track.position = loc;
            track.visibility = 1.0;
            track.confidence = 1.0;
            track.motion = Some(MotionTracker::start(self.config.alpha, loc)?);
        }

        let n = self.tracks.len();
        let refined: Vec<bool> = self.tracks.iter().map(|tr| tr.is_active() && tr.query.t < t).collect();
        let mut rows = vec![0.0f32; n * SHIFT_MAPS_LEN];
        let mut snapshots: Vec<Option<StateSnapshot>> = vec![None; n];
        let mut entries = Vec::with_capacity(n);
        for j in 0..n {
            if !self.tracks[j].is_active() {
                entries.push(RowEntry::Proxy);
                continue;
            }
            if refined[j] {
                let mode = self.config.init_mode;
                let motion = self.tracks[j].motion.as_mut().expect("active track has motion state");
                self.tracks[j].position = motion.predict(mode)?;
            }
            let (entry, snapshot) = self.observe(j, &pyramid, &mut rows)?;
            snapshots[j] = Some(snapshot);
            entries.push(entry);
        }
        window.begin(t, &pyramid, entries)?;

        if refined.iter().any(|r| *r) {
            let passes = self.config.refine_passes;
            let (max_x, max_y) = ((self.width - 1) as f64, (self.height - 1) as f64);
            for pass in 0..passes {
                let block = window.block(&self.tracks, &self.params)?;
                let deltas = refine(&block, &rows, (self.width, self.height), &self.params)?;
                for (j, d) in deltas.iter().enumerate().filter(|(j, _)| refined[*j]) {
                    let tr = &mut self.tracks[j];
                    // estimates stay on the image; patches sampled off it are pure border replication
                    tr.position = [
                        (tr.position[0] + d.position[0]).clamp(0.0, max_x),
                        (tr.position[1] + d.position[1]).clamp(0.0, max_y),
                    ];
                    tr.visibility = (tr.visibility + d.visibility).clamp(0.0, 1.0);
                    tr.confidence = (tr.confidence + d.confidence).clamp(0.0, 1.0);
                }
                if pass + 1 < passes {
                    // re-sample at the updated locations; only the last pass's features stay cached
                    for j in (0..n).filter(|&j| refined[j]) {
                        let (entry, snapshot) = self.observe(j, &pyramid, &mut rows)?;
                        snapshots[j] = Some(snapshot);
                        window.replace(j, entry)?;
                    }
                }
            }
        }

        for (j, snap) in snapshots.iter_mut().enumerate() {
            if let Some(snap) = snap {
                let tr = &mut self.tracks[j];
                snap.position = tr.position;
                snap.visibility = tr.visibility;
                snap.confidence = tr.confidence;
                if refined[j] {
                    tr.motion
                        .as_mut()
                        .expect("active track has motion state")
                        .accept(tr.position);
                }
            }
        }
        window.finish(&snapshots)?;
        self.next_frame = t + 1;

        let threshold = self.config.visibility_threshold;
        let tracks = self
            .tracks
            .iter()
            .filter(|tr| tr.is_active())
            .map(|tr| TrackPrediction {
                id: tr.id,
                position: tr.position,
                visible: tr.visibility > threshold,
                visibility: tr.visibility,
                confidence: tr.confidence,
            })
            .collect();
        Ok(Prediction { frame: t, tracks })
    }
}
