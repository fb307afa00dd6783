//! Latency and memory benchmarking.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::buffer::MemoryReport;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::{PATCH_AREA, PYRAMID_FACTORS};
use crate::tracker::{FrameTracker, QueryPoint, ReferenceTracker, StreamingTracker, TrackState, TrackerConfig};

/// One buffer fill at the default capacity.
pub const DEFAULT_WARMUP: usize = 16;

/// Nearest-rank percentile: the smallest sample with at least `p`% of the
/// samples at or below it.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidConfig(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64 / 100.0).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Extra latency from waiting for `stride` frames at `rate` Hz before a window
/// can be processed.
pub fn accumulation_delay(stride: usize, rate: f64) -> Result<f64> {
    if stride < 1 || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidConfig(format!("stride {stride} / rate {rate}")));
    }
    Ok((stride - 1) as f64 * 1000.0 / rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    /// Timed `step` calls after warmup, in milliseconds.
    pub latencies_ms: Vec<f64>,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
    pub points: usize,
    pub frames: usize,
    pub fingerprint: String,
    pub rate: Option<f64>,
    pub accumulation_delay_ms: Option<f64>,
}

impl LatencyReport {
    pub fn from_samples(latencies_ms: Vec<f64>, points: usize, frames: usize, fingerprint: String) -> Result<Self> {
        Ok(Self {
            p50: percentile(&latencies_ms, 50.0)?,
            p95: percentile(&latencies_ms, 95.0)?,
            p99: percentile(&latencies_ms, 99.0)?,
            mean: latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64,
            latencies_ms,
            points,
            frames,
            fingerprint,
            rate: None,
            accumulation_delay_ms: None,
        })
    }

    pub fn with_rate(mut self, rate: f64, stride: usize) -> Result<Self> {
        self.accumulation_delay_ms = Some(accumulation_delay(stride, rate)?);
        self.rate = Some(rate);
        Ok(self)
    }

    /// One latency value per line.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for v in &self.latencies_ms {
            writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "config {}", self.fingerprint)?;
        writeln!(
            f,
            "points {} frames {} timed {}",
            self.points,
            self.frames,
            self.latencies_ms.len()
        )?;
        writeln!(
            f,
            "p50_ms {:.3} p95_ms {:.3} p99_ms {:.3} mean_ms {:.3}",
            self.p50, self.p95, self.p99, self.mean
        )?;
        if let (Some(rate), Some(delay)) = (self.rate, self.accumulation_delay_ms) {
            writeln!(f, "rate_hz {rate} accumulation_delay_ms {delay:.2}")?;
        }
        Ok(())
    }
}

/// Feeds `frames` through `tracker`, timing each `step` after the first
/// `warmup` frames. Queries are registered before the clock starts.
pub fn bench_stream<T: FrameTracker>(
    tracker: &mut T,
    frames: &[Frame],
    queries: &[QueryPoint],
    warmup: usize,
    fingerprint: String,
) -> Result<LatencyReport> {
    if frames.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if warmup >= frames.len() {
        return Err(Error::InvalidConfig(format!(
            "warmup {warmup} must be below the frame count {}",
            frames.len()
        )));
    }
    tracker.add_queries(queries)?;
    let mut samples = Vec::with_capacity(frames.len() - warmup);
    for (i, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let out = tracker.step(frame)?;
        let elapsed = start.elapsed();
        std::hint::black_box(&out);
        if i >= warmup {
            samples.push(elapsed.as_secs_f64() * 1e3);
        }
    }
    LatencyReport::from_samples(samples, queries.len(), frames.len(), fingerprint)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheComparison {
    pub cached: LatencyReport,
    pub uncached: LatencyReport,
}

impl CacheComparison {
    /// Uncached p95 over cached p95.
    pub fn speedup(&self) -> f64 {
        self.uncached.p95 / self.cached.p95
    }
}

impl fmt::Display for CacheComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[cached]")?;
        write!(f, "{}", self.cached)?;
        writeln!(f, "[uncached]")?;
        write!(f, "{}", self.uncached)?;
        writeln!(f, "p95_speedup {:.3}", self.speedup())
    }
}

/// Times the cached tracker and the recomputing tracker (window = buffer
/// capacity, stride 1) on the same input, back to back.
pub fn compare_cache(
    config: &TrackerConfig,
    frames: &[Frame],
    queries: &[QueryPoint],
    warmup: usize,
) -> Result<CacheComparison> {
    let first = frames.first().ok_or(Error::EmptyBuffer)?;
    let (w, h) = (first.width(), first.height());
    let mut cached = StreamingTracker::new(config.clone(), w, h)?;
    let cached = bench_stream(
        &mut cached,
        frames,
        queries,
        warmup,
        format!("cached-{}", config.fingerprint()),
    )?;
    let ref_config = TrackerConfig {
        window: config.buffer_capacity,
        stride: 1,
        ..config.clone()
    };
    let mut uncached = ReferenceTracker::new(ref_config, w, h)?;
    let uncached = bench_stream(
        &mut uncached,
        frames,
        queries,
        warmup,
        format!("uncached-{}", config.fingerprint()),
    )?;
    Ok(CacheComparison { cached, uncached })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBench {
    pub points: usize,
    /// What a tracker's buffer actually allocated.
    pub buffer: MemoryReport,
    /// The closed form `T_B x N x D_corr x 4` and friends.
    pub formula: MemoryReport,
    /// Per-track state outside the buffer: the struct plus its query patch.
    pub track_state_bytes: usize,
}

impl MemoryBench {
    pub fn total(&self) -> usize {
        self.buffer.total() + self.track_state_bytes
    }
}

impl fmt::Display for MemoryBench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mib = |b: usize| b as f64 / (1024.0 * 1024.0);
        writeln!(f, "points {}", self.points)?;
        writeln!(
            f,
            "feature_bytes {} ({:.2} MiB) formula {}",
            self.buffer.feature_bytes,
            mib(self.buffer.feature_bytes),
            self.formula.feature_bytes
        )?;
        writeln!(
            f,
            "mask_bytes {} state_bytes {}",
            self.buffer.mask_bytes, self.buffer.state_bytes
        )?;
        writeln!(f, "track_state_bytes {}", self.track_state_bytes)?;
        writeln!(f, "total_bytes {} ({:.2} MiB)", self.total(), mib(self.total()))
    }
}

pub fn track_state_bytes(config: &TrackerConfig) -> usize {
    std::mem::size_of::<TrackState>()
        + PYRAMID_FACTORS.len() * PATCH_AREA * config.model.feature_dim * std::mem::size_of::<f32>()
}

/// Registers `points` tracks on a buffer of the configured shape and reports
/// what it allocated next to the closed form. No model is built, so this works
/// for dims far beyond what the toy model could run.
pub fn bench_memory(config: &TrackerConfig, points: usize) -> Result<MemoryBench> {
    let mut buffer = crate::buffer::TemporalMemoryBuffer::new(config.buffer_capacity, config.model.corr_dim)?;
    if points > 0 {
        buffer.add_tracks(points)?;
    }
    Ok(MemoryBench {
        points,
        buffer: buffer.memory_bytes(),
        formula: MemoryReport::closed_form(config.buffer_capacity, points, config.model.corr_dim),
        track_state_bytes: points * track_state_bytes(config),
    })
}
