#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringtrack::model::Backend;
use ringtrack::synth::{AffineMotion, Deformation, MotionConfig};
use ringtrack::tracker::{Prediction, QueryPoint, StreamingTracker, TrackerConfig};
use ringtrack::Frame;

/// Small model dims so that recompute-heavy runs stay fast.
pub fn toy_config(backend: Backend, capacity: usize) -> TrackerConfig {
    let mut c = TrackerConfig {
        buffer_capacity: capacity,
        window: capacity,
        stride: 1,
        ..TrackerConfig::default()
    };
    c.model.backend = backend;
    c.model.feature_dim = 16;
    c.model.conv_channels = 8;
    c.model.corr_hidden = 8;
    c.model.corr_dim = 64;
    c.model.width = 32;
    c.model.heads = 4;
    c.model.depth = 2;
    c
}

/// Smooth random motion sized for a `side` x `side` frame.
pub fn random_motion(rng: &mut ChaCha8Rng, side: usize, frames: usize, points: usize) -> MotionConfig {
    let s = side as f64 / 256.0;
    MotionConfig {
        width: side,
        height: side,
        frames,
        points,
        seed: rng.gen(),
        affine: AffineMotion {
            velocity: [rng.gen_range(-0.3..0.3) * s, rng.gen_range(-0.3..0.3) * s],
            oscillation: [rng.gen_range(-30.0..30.0) * s, rng.gen_range(-30.0..30.0) * s],
            period: rng.gen_range(15.0..40.0),
            rotation: rng.gen_range(-0.002..0.002),
            scale_rate: rng.gen_range(-0.001..0.001),
        },
        deformation: Deformation {
            amplitude: rng.gen_range(0.0..2.0) * s,
            wavelength: 64.0 * s,
            frequency: 0.02,
        },
        occluder: None,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Queries at frame 0 for every point, plus `late` extra ones at random later frames.
pub fn queries_with_insertions(
    rng: &mut ChaCha8Rng,
    points: &[[f64; 2]],
    late: usize,
    frames: usize,
) -> Vec<QueryPoint> {
    let mut q: Vec<QueryPoint> = points[..points.len() - late]
        .iter()
        .map(|p| QueryPoint::new(0, p[0], p[1]))
        .collect();
    for p in &points[points.len() - late..] {
        q.push(QueryPoint::new(rng.gen_range(1..frames as u64), p[0], p[1]));
    }
    q
}

pub fn run_stream(config: &TrackerConfig, frames: &[Frame], queries: &[QueryPoint]) -> Vec<Prediction> {
    let mut tr = StreamingTracker::new(config.clone(), frames[0].width(), frames[0].height()).unwrap();
    tr.add_queries(queries).unwrap();
    frames.iter().map(|f| tr.step(f).unwrap()).collect()
}

/// Largest absolute difference in position, visibility or confidence over
/// tracks present in both runs; panics if a frame's track ids differ.
pub fn max_difference(a: &[Prediction], b: &[Prediction]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for (pa, pb) in a.iter().zip(b) {
        assert_eq!(pa.frame, pb.frame);
        let ids_a: Vec<usize> = pa.tracks.iter().map(|t| t.id).collect();
        let ids_b: Vec<usize> = pb.tracks.iter().map(|t| t.id).collect();
        assert_eq!(ids_a, ids_b, "frame {}", pa.frame);
        for (ta, tb) in pa.tracks.iter().zip(&pb.tracks) {
            worst = worst
                .max((ta.position[0] - tb.position[0]).abs())
                .max((ta.position[1] - tb.position[1]).abs())
                .max((ta.visibility - tb.visibility).abs() as f64)
                .max((ta.confidence - tb.confidence).abs() as f64);
        }
    }
    worst
}
