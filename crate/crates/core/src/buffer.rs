//! Temporal memory: a FIFO ring of per-frame correlation-feature rows.
//!
//! Each slot holds one row: for every registered track, a correlation feature,
//! a snapshot of the track state at that frame, and a validity bit. Tracks
//! registered after a slot was written get zero-valued proxy entries that are
//! always invalid, so the refiner never attends to them.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Track state captured alongside a cached feature.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StateSnapshot {
    /// Where the patch behind the cached feature was sampled.
    pub sample_loc: [f64; 2],
    pub position: [f64; 2],
    pub visibility: f32,
    pub confidence: f32,
}

/// One track's contribution to a pushed row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowEntry {
    Proxy,
    Observed {
        features: Vec<f32>,
        snapshot: StateSnapshot,
    },
}

/// Ids evicted or allocated by buffer operations.
pub type TrackRange = std::ops::Range<usize>;

/// Refinement input: rows ordered oldest to newest, laid out `[slot][track]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBlock {
    pub frames: Vec<u64>,
    pub num_tracks: usize,
    pub corr_dim: usize,
    pub features: Vec<f32>,
    pub snapshots: Vec<StateSnapshot>,
    pub valid: Vec<bool>,
}

impl TokenBlock {
    pub fn slots(&self) -> usize {
        self.frames.len()
    }

    pub fn feature(&self, slot: usize, track: usize) -> &[f32] {
        let base = (slot * self.num_tracks + track) * self.corr_dim;
        &self.features[base..base + self.corr_dim]
    }

    pub fn snapshot(&self, slot: usize, track: usize) -> &StateSnapshot {
        &self.snapshots[slot * self.num_tracks + track]
    }

    pub fn is_valid(&self, slot: usize, track: usize) -> bool {
        self.valid[slot * self.num_tracks + track]
    }

    /// Checks that every array agrees with `slots x num_tracks x corr_dim`.
    pub fn check_shape(&self) -> Result<()> {
        let cells = self.slots() * self.num_tracks;
        let checks = [
            ("token features", cells * self.corr_dim, self.features.len()),
            ("token snapshots", cells, self.snapshots.len()),
            ("token mask", cells, self.valid.len()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(Error::DimensionMismatch { what, expected, actual });
            }
        }
        Ok(())
    }
}

/// Byte accounting for the buffer, split by storage kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    pub feature_bytes: usize,
    pub mask_bytes: usize,
    pub state_bytes: usize,
}

impl MemoryReport {
    /// `capacity x tracks x corr_dim x 4` bytes of features, plus one mask byte
    /// and one snapshot per cell.
    pub fn closed_form(capacity: usize, tracks: usize, corr_dim: usize) -> Self {
        let cells = capacity * tracks;
        Self {
            feature_bytes: cells * corr_dim * std::mem::size_of::<f32>(),
            mask_bytes: cells * std::mem::size_of::<bool>(),
            state_bytes: cells * std::mem::size_of::<StateSnapshot>(),
        }
    }

    pub fn total(&self) -> usize {
        self.feature_bytes + self.mask_bytes + self.state_bytes
    }
}

#[derive(Debug, Clone)]
pub struct TemporalMemoryBuffer {
    capacity: usize,
    corr_dim: usize,
    num_tracks: usize,
    occupancy: usize,
    cursor: usize,
    /// Frame id held by each physical slot.
    slot_frames: Vec<u64>,
    features: Vec<f32>,
    snapshots: Vec<StateSnapshot>,
    valid: Vec<bool>,
}

impl TemporalMemoryBuffer {
    pub fn new(capacity: usize, corr_dim: usize) -> Result<Self> {
        if capacity == 0 || corr_dim == 0 {
            return Err(Error::InvalidConfig(
                "buffer capacity and corr_dim must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            corr_dim,
            num_tracks: 0,
            occupancy: 0,
            cursor: 0,
            slot_frames: vec![0; capacity],
            features: Vec::new(),
            snapshots: Vec::new(),
            valid: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn num_tracks(&self) -> usize {
        self.num_tracks
    }

    pub fn corr_dim(&self) -> usize {
        self.corr_dim
    }

    /// Physical slot of the `i`-th oldest retained row.
    fn physical(&self, i: usize) -> usize {
        (self.cursor + self.capacity - self.occupancy + i) % self.capacity
    }

    /// Frame ids currently held, oldest first.
    pub fn frames(&self) -> Vec<u64> {
        (0..self.occupancy)
            .map(|i| self.slot_frames[self.physical(i)])
            .collect()
    }

    /// Registers `count` new track columns. Every existing slot receives a proxy
    /// entry for them.
    pub fn add_tracks(&mut self, count: usize) -> Result<TrackRange> {
        if count == 0 {
            return Err(Error::ZeroTracks);
        }
        let old = self.num_tracks;
        let new = old + count;
        let mut features = vec![0.0f32; self.capacity * new * self.corr_dim];
        let mut snapshots = vec![StateSnapshot::default(); self.capacity * new];
        let mut valid = vec![false; self.capacity * new];
        for slot in 0..self.capacity {
            let src = slot * old;
            let dst = slot * new;
            features[dst * self.corr_dim..(dst + old) * self.corr_dim]
                .copy_from_slice(&self.features[src * self.corr_dim..(src + old) * self.corr_dim]);
            snapshots[dst..dst + old].copy_from_slice(&self.snapshots[src..src + old]);
            valid[dst..dst + old].copy_from_slice(&self.valid[src..src + old]);
        }
        self.features = features;
        self.snapshots = snapshots;
        self.valid = valid;
        self.num_tracks = new;
        Ok(old..new)
    }

    /// Appends a row for `frame`, overwriting the oldest slot when full. Returns
    /// the frame id that was evicted, if any.
    pub fn push(&mut self, frame: u64, row: Vec<RowEntry>) -> Result<Option<u64>> {
        if row.len() != self.num_tracks {
            return Err(Error::DimensionMismatch {
                what: "row track count",
                expected: self.num_tracks,
                actual: row.len(),
            });
        }
        for entry in &row {
            if let RowEntry::Observed { features, .. } = entry {
                if features.len() != self.corr_dim {
                    return Err(Error::DimensionMismatch {
                        what: "correlation feature length",
                        expected: self.corr_dim,
                        actual: features.len(),
                    });
                }
            }
        }
        let slot = self.cursor;
        let evicted = (self.occupancy == self.capacity).then(|| self.slot_frames[slot]);
        self.slot_frames[slot] = frame;
        for (track, entry) in row.into_iter().enumerate() {
            self.write_cell(slot, track, entry);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.occupancy = (self.occupancy + 1).min(self.capacity);
        Ok(evicted)
    }

    fn write_cell(&mut self, slot: usize, track: usize, entry: RowEntry) {
        let cell = slot * self.num_tracks + track;
        let dst = &mut self.features[cell * self.corr_dim..(cell + 1) * self.corr_dim];
        match entry {
            RowEntry::Proxy => {
                dst.fill(0.0);
                self.snapshots[cell] = StateSnapshot::default();
                self.valid[cell] = false;
            }
            RowEntry::Observed { features, snapshot } => {
                dst.copy_from_slice(&features);
                self.snapshots[cell] = snapshot;
                self.valid[cell] = true;
            }
        }
    }

    fn newest_slot(&self) -> Result<usize> {
        if self.occupancy == 0 {
            return Err(Error::EmptyBuffer);
        }
        Ok((self.cursor + self.capacity - 1) % self.capacity)
    }

    /// Replaces one track's entry in the newest row (used between refinement passes).
    pub fn overwrite_latest(&mut self, track: usize, entry: RowEntry) -> Result<()> {
        let slot = self.newest_slot()?;
        if track >= self.num_tracks {
            return Err(Error::DimensionMismatch {
                what: "track index",
                expected: self.num_tracks,
                actual: track,
            });
        }
        if let RowEntry::Observed { features, .. } = &entry {
            if features.len() != self.corr_dim {
                return Err(Error::DimensionMismatch {
                    what: "correlation feature length",
                    expected: self.corr_dim,
                    actual: features.len(),
                });
            }
        }
        self.write_cell(slot, track, entry);
        Ok(())
    }

    /// Updates the state snapshot of a valid entry in the newest row, keeping its features.
    pub fn update_latest_state(
        &mut self,
        track: usize,
        position: [f64; 2],
        visibility: f32,
        confidence: f32,
    ) -> Result<()> {
        let slot = self.newest_slot()?;
        let cell = slot * self.num_tracks + track;
        if self.valid[cell] {
            let snap = &mut self.snapshots[cell];
            snap.position = position;
            snap.visibility = visibility;
            snap.confidence = confidence;
        }
        Ok(())
    }

    /// Copies the most recent `window` rows (all rows when `None`) oldest first.
    /// Cached features are copied verbatim.
    pub fn assemble(&self, window: Option<usize>) -> Result<TokenBlock> {
        if self.occupancy == 0 {
            return Err(Error::EmptyBuffer);
        }
        let take = window.unwrap_or(self.occupancy).clamp(1, self.occupancy);
        let skip = self.occupancy - take;
        let n = self.num_tracks;
        let mut block = TokenBlock {
            frames: Vec::with_capacity(take),
            num_tracks: n,
            corr_dim: self.corr_dim,
            features: Vec::with_capacity(take * n * self.corr_dim),
            snapshots: Vec::with_capacity(take * n),
            valid: Vec::with_capacity(take * n),
        };
        for i in skip..self.occupancy {
            let slot = self.physical(i);
            block.frames.push(self.slot_frames[slot]);
            block
                .features
                .extend_from_slice(&self.features[slot * n * self.corr_dim..(slot + 1) * n * self.corr_dim]);
            block
                .snapshots
                .extend_from_slice(&self.snapshots[slot * n..(slot + 1) * n]);
            block.valid.extend_from_slice(&self.valid[slot * n..(slot + 1) * n]);
        }
        Ok(block)
    }

    /// Validity bit for the `i`-th oldest row and a track.
    pub fn is_valid(&self, row: usize, track: usize) -> bool {
        row < self.occupancy && self.valid[self.physical(row) * self.num_tracks + track]
    }

    /// Allocated storage. Feature storage is sized for full capacity as soon as
    /// tracks exist.
    pub fn memory_bytes(&self) -> MemoryReport {
        MemoryReport {
            feature_bytes: self.features.len() * std::mem::size_of::<f32>(),
            mask_bytes: self.valid.len() * std::mem::size_of::<bool>(),
            state_bytes: self.snapshots.len() * std::mem::size_of::<StateSnapshot>(),
        }
    }

    /// Plain-text validity grid, one line per retained row (oldest first):
    /// `<frame>: <one char per track>` with `#` valid and `.` masked.
    pub fn dump_validity(&self) -> String {
        let mut out = String::new();
        for i in 0..self.occupancy {
            let slot = self.physical(i);
            let _ = write!(out, "{}: ", self.slot_frames[slot]);
            for track in 0..self.num_tracks {
                out.push(if self.valid[slot * self.num_tracks + track] {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn observed(v: f32, dim: usize) -> RowEntry {
        RowEntry::Observed {
            features: vec![v; dim],
            snapshot: StateSnapshot {
                position: [v as f64, 0.0],
                ..Default::default()
            },
        }
    }

    fn row(frame: u64, tracks: usize, dim: usize) -> Vec<RowEntry> {
        (0..tracks).map(|_| observed(frame as f32, dim)).collect()
    }

    #[test]
    fn fills_below_capacity_without_eviction() {
        let mut buf = TemporalMemoryBuffer::new(16, 4).unwrap();
        buf.add_tracks(2).unwrap();
        for f in 1..=3 {
            assert_eq!(buf.push(f, row(f, 2, 4)).unwrap(), None);
        }
        assert_eq!(buf.occupancy(), 3);
        assert_eq!(buf.frames(), vec![1, 2, 3]);
    }

    #[test]
    fn seventeenth_push_evicts_first_frame() {
        let mut buf = TemporalMemoryBuffer::new(16, 4).unwrap();
        buf.add_tracks(1).unwrap();
        for f in 1..=16 {
            assert_eq!(buf.push(f, row(f, 1, 4)).unwrap(), None);
        }
        assert_eq!(buf.push(17, row(17, 1, 4)).unwrap(), Some(1));
        assert_eq!(buf.frames(), (2..=17).collect::<Vec<_>>());
        let block = buf.assemble(None).unwrap();
        assert_eq!(block.slots(), 16);
        for (slot, frame) in (2..=17).enumerate() {
            assert_eq!(block.feature(slot, 0)[0], frame as f32);
        }
    }

    #[test]
    fn rejects_row_width_mismatch() {
        let mut buf = TemporalMemoryBuffer::new(4, 2).unwrap();
        buf.add_tracks(3).unwrap();
        assert!(matches!(
            buf.push(0, row(0, 2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            buf.push(0, row(0, 3, 5)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(buf.add_tracks(0), Err(Error::ZeroTracks)));
    }

    #[test]
    fn added_tracks_are_masked_in_prior_slots() {
        let mut buf = TemporalMemoryBuffer::new(16, 3).unwrap();
        buf.add_tracks(4).unwrap();
        for f in 0..10 {
            buf.push(f, row(f, 4, 3)).unwrap();
        }
        let ids = buf.add_tracks(5).unwrap();
        assert_eq!(ids, 4..9);
        let block = buf.assemble(None).unwrap();
        let mut masked_new = 0;
        for slot in 0..10 {
            for t in 0..4 {
                assert!(block.is_valid(slot, t));
                assert_eq!(block.feature(slot, t)[0], slot as f32);
            }
            for t in ids.clone() {
                assert!(!block.is_valid(slot, t));
                assert!(block.feature(slot, t).iter().all(|v| *v == 0.0));
                masked_new += 1;
            }
        }
        assert_eq!(masked_new, 50);
        // next push widens the row
        buf.push(10, row(10, 9, 3)).unwrap();
        assert!(buf.is_valid(10, 8));
    }

    #[test]
    fn assemble_is_pure_and_windowed() {
        let mut buf = TemporalMemoryBuffer::new(8, 2).unwrap();
        assert!(matches!(buf.assemble(None), Err(Error::EmptyBuffer)));
        buf.add_tracks(2).unwrap();
        buf.push(0, row(0, 2, 2)).unwrap();
        assert_eq!(buf.assemble(None).unwrap().slots(), 1);
        for f in 1..12 {
            buf.push(f, row(f, 2, 2)).unwrap();
        }
        let a = buf.assemble(None).unwrap();
        let b = buf.assemble(None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames, (4..12).collect::<Vec<_>>());
        let w = buf.assemble(Some(3)).unwrap();
        assert_eq!(w.frames, vec![9, 10, 11]);
    }

    #[test]
    fn overwrite_and_update_latest() {
        let mut buf = TemporalMemoryBuffer::new(4, 2).unwrap();
        buf.add_tracks(2).unwrap();
        assert!(buf.overwrite_latest(0, RowEntry::Proxy).is_err());
        buf.push(0, row(0, 2, 2)).unwrap();
        buf.push(1, row(1, 2, 2)).unwrap();
        buf.overwrite_latest(1, observed(7.0, 2)).unwrap();
        buf.update_latest_state(1, [3.0, 4.0], 0.25, 0.5).unwrap();
        let block = buf.assemble(None).unwrap();
        assert_eq!(block.feature(1, 1), &[7.0, 7.0]);
        assert_eq!(block.snapshot(1, 1).position, [3.0, 4.0]);
        assert_eq!(block.feature(0, 1), &[0.0, 0.0]);
    }

    #[test]
    fn memory_follows_closed_form() {
        let mut buf = TemporalMemoryBuffer::new(16, 1024).unwrap();
        assert_eq!(buf.memory_bytes().feature_bytes, 0);
        buf.add_tracks(1024).unwrap();
        let report = buf.memory_bytes();
        assert_eq!(report, MemoryReport::closed_form(16, 1024, 1024));
        assert_eq!(report.feature_bytes, 64 * 1024 * 1024);
        assert_eq!(MemoryReport::closed_form(16, 1024, 256).feature_bytes, 16 * 1024 * 1024);
    }

    #[test]
    fn validity_dump_shows_grid() {
        let mut buf = TemporalMemoryBuffer::new(4, 1).unwrap();
        buf.add_tracks(1).unwrap();
        buf.push(5, row(5, 1, 1)).unwrap();
        buf.add_tracks(1).unwrap();
        buf.push(6, vec![observed(1.0, 1), RowEntry::Proxy]).unwrap();
        buf.push(7, row(7, 2, 1)).unwrap();
        assert_eq!(buf.dump_validity(), "5: #.\n6: #.\n7: ##\n");
    }
}
