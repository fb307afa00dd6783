//! Synthetic deformable sequences with exact ground truth.
//!
//! Frame `t` shows a procedural texture pulled back through the forward warp
//! `W_t(p) = A_t(p) + D_t(A_t(p))`, where `A_t` is a parametric affine map
//! about the image center and `D_t` a sinusoidal displacement field. Ground
//! truth is `W_t` applied to the frame-0 points, so it is exact; rendering
//! inverts the warp with Newton steps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::MIN_FRAME_SIDE;

/// Border margin used when placing default query points, px.
pub const DEFAULT_POINT_MARGIN: f64 = 48.0;

/// Parametric affine schedule. All terms vanish at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMotion {
    /// Constant translation, px/frame.
    pub velocity: [f64; 2],
    /// Peak oscillation offset, px.
    pub oscillation: [f64; 2],
    /// Oscillation period in frames.
    pub period: f64,
    /// Rotation about the image center, rad/frame.
    pub rotation: f64,
    /// Linear scale change per frame; the scale at t is `1 + scale_rate * t`.
    pub scale_rate: f64,
}

impl AffineMotion {
    pub fn identity() -> Self {
        Self {
            velocity: [0.0, 0.0],
            oscillation: [0.0, 0.0],
            period: 1.0,
            rotation: 0.0,
            scale_rate: 0.0,
        }
    }

    pub fn translation(vx: f64, vy: f64) -> Self {
        Self {
            velocity: [vx, vy],
            ..Self::identity()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deformation {
    /// Peak displacement, px.
    pub amplitude: f64,
    /// Spatial wavelength, px.
    pub wavelength: f64,
    /// Temporal frequency, cycles/frame.
    pub frequency: f64,
}

impl Deformation {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            wavelength: 64.0,
            frequency: 0.0,
        }
    }
}

/// Solid rectangle drawn on top of the warped texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occluder {
    /// Top-left corner at `start_frame`.
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// px/frame.
    pub velocity: [f64; 2],
    pub start_frame: u64,
}

impl Occluder {
    pub const INTENSITY: f32 = 0.0;

    /// Top-left corner at frame `t`, or `None` before the occluder appears.
    pub fn corner(&self, t: u64) -> Option<[f64; 2]> {
        if t < self.start_frame {
            return None;
        }
        let dt = (t - self.start_frame) as f64;
        Some([
            self.origin[0] + self.velocity[0] * dt,
            self.origin[1] + self.velocity[1] * dt,
        ])
    }

    /// Half-open containment test `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn covers(&self, t: u64, x: f64, y: f64) -> bool {
        match self.corner(t) {
            Some([x0, y0]) => x >= x0 && x < x0 + self.size[0] && y >= y0 && y < y0 + self.size[1],
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Number of points placed by [`MotionConfig::sample_points`].
    pub points: usize,
    pub seed: u64,
    pub affine: AffineMotion,
    pub deformation: Deformation,
    pub occluder: Option<Occluder>,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 100,
            points: 64,
            seed: 42,
            affine: AffineMotion {
                velocity: [0.0, 0.0],
                oscillation: [40.0, 24.0],
                period: 20.0,
                rotation: 0.0,
                scale_rate: 0.0,
            },
            deformation: Deformation {
                amplitude: 3.0,
                wavelength: 64.0,
                frequency: 0.02,
            },
            occluder: None,
        }
    }
}

impl MotionConfig {
    /// Adds a 32x64 occluder sweeping left to right through the middle rows.
    pub fn with_default_occluder(mut self) -> Self {
        let h = self.height as f64;
        self.occluder = Some(Occluder {
            origin: [-32.0, h * 0.5 - 32.0],
            size: [32.0, 64.0],
            velocity: [6.0, 0.0],
            start_frame: 10,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_FRAME_SIDE || self.height < MIN_FRAME_SIDE {
            return Err(Error::FrameTooSmall {
                width: self.width,
                height: self.height,
                min: MIN_FRAME_SIDE,
            });
        }
        if self.frames == 0 {
            return Err(Error::InvalidConfig("frames must be at least 1".into()));
        }
        let d = &self.deformation;
        if !(d.amplitude >= 0.0 && d.amplitude.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "deformation amplitude {} must be >= 0",
                d.amplitude
            )));
        }
        if !(d.wavelength > 0.0 && d.wavelength.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "deformation wavelength {} must be > 0",
                d.wavelength
            )));
        }
        // keeps r + D(r) invertible with a well-conditioned Jacobian
        if d.amplitude * TAU / d.wavelength >= 0.9 {
            return Err(Error::InvalidConfig(format!(
                "deformation amplitude {} too large for wavelength {}",
                d.amplitude, d.wavelength
            )));
        }
        let a = &self.affine;
        let finite = a.velocity.iter().chain(&a.oscillation).all(|v| v.is_finite())
            && a.rotation.is_finite()
            && a.scale_rate.is_finite()
            && d.frequency.is_finite();
        if !finite || !(a.period > 0.0) {
            return Err(Error::InvalidConfig(
                "motion parameters must be finite with period > 0".into(),
            ));
        }
        if let Some(o) = &self.occluder {
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return Err(Error::InvalidConfig("occluder size must be positive".into()));
            }
        }
        Ok(())
    }

    /// Affine map at frame `t` as a row-major 2x3 matrix `[a, b, tx, c, d, ty]`.
    pub fn affine_at(&self, t: u64) -> Result<[f64; 6]> {
        let a = &self.affine;
        let tf = t as f64;
        let scale = 1.0 + a.scale_rate * tf;
        if !(scale > 0.0) {
            return Err(Error::DegenerateAffine { frame: t });
        }
        let (sin, cos) = (a.rotation * tf).sin_cos();
        let (m00, m01, m10, m11) = (scale * cos, -scale * sin, scale * sin, scale * cos);
        let c = self.center();
        let phase = (TAU * tf / a.period).sin();
        let shift = [
            a.velocity[0] * tf + a.oscillation[0] * phase,
            a.velocity[1] * tf + a.oscillation[1] * phase,
        ];
        // p -> c + M (p - c) + shift
        let tx = c[0] - m00 * c[0] - m01 * c[1] + shift[0];
        let ty = c[1] - m10 * c[0] - m11 * c[1] + shift[1];
        Ok([m00, m01, tx, m10, m11, ty])
    }

    fn center(&self) -> [f64; 2] {
        [(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0]
    }

    fn displacement(&self, t: u64, r: [f64; 2]) -> [f64; 2] {
        let d = &self.deformation;
        if d.amplitude == 0.0 {
            return [0.0, 0.0];
        }
        let k = TAU / d.wavelength;
        let amp = d.amplitude * (TAU * d.frequency * t as f64).sin();
        [amp * (k * r[1] + PHASE[0]).sin(), amp * (k * r[0] + PHASE[1]).sin()]
    }

    /// Forward warp of a frame-0 location to frame `t`.
    pub fn warp(&self, t: u64, p: [f64; 2]) -> Result<[f64; 2]> {
        let m = self.affine_at(t)?;
        let r = apply(&m, p);
        let d = self.displacement(t, r);
        Ok([r[0] + d[0], r[1] + d[1]])
    }

    /// Frame-0 location that lands on `q` at frame `t`.
    pub fn unwarp(&self, t: u64, q: [f64; 2]) -> Result<[f64; 2]> {
        let m = self.affine_at(t)?;
        let d = &self.deformation;
        let amp = d.amplitude * (TAU * d.frequency * t as f64).sin();
        let mut r = q;
        if amp != 0.0 {
            // Newton on r + D(r) = q; the Jacobian is [[1, a], [b, 1]]
            let k = TAU / d.wavelength;
            for _ in 0..MAX_NEWTON_STEPS {
                let (sy, cy) = (k * r[1] + PHASE[0]).sin_cos();
                let (sx, cx) = (k * r[0] + PHASE[1]).sin_cos();
                let f = [r[0] + amp * sy - q[0], r[1] + amp * sx - q[1]];
                let (a, b) = (amp * k * cy, amp * k * cx);
                let det = 1.0 - a * b;
                let step = [(f[0] - a * f[1]) / det, (f[1] - b * f[0]) / det];
                r = [r[0] - step[0], r[1] - step[1]];
                if step[0].abs().max(step[1].abs()) < 1e-12 {
                    break;
                }
            }
        }
        Ok(invert_apply(&m, r))
    }

    /// Deterministic frame-0 points, kept `margin` px away from the border.
    pub fn sample_points(&self, margin: f64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(7);
        let (w, h) = (self.width as f64, self.height as f64);
        let mx = margin.min(w / 2.0 - 1.0).max(0.0);
        let my = margin.min(h / 2.0 - 1.0).max(0.0);
        (0..self.points)
            .map(|_| [rng.gen_range(mx..w - 1.0 - mx), rng.gen_range(my..h - 1.0 - my)])
            .collect()
    }
}

const PHASE: [f64; 2] = [0.7, 1.9];
const MAX_NEWTON_STEPS: usize = 20;

fn apply(m: &[f64; 6], p: [f64; 2]) -> [f64; 2] {
    [m[0] * p[0] + m[1] * p[1] + m[2], m[3] * p[0] + m[4] * p[1] + m[5]]
}

fn invert_apply(m: &[f64; 6], q: [f64; 2]) -> [f64; 2] {
    let det = m[0] * m[4] - m[1] * m[3];
    let (x, y) = (q[0] - m[2], q[1] - m[5]);
    [(m[4] * x - m[1] * y) / det, (-m[3] * x + m[0] * y) / det]
}

/// Multi-octave value noise in [0.15, 0.95], so it never matches the occluder.
#[derive(Debug, Clone, Copy)]
pub struct Texture {
    seed: u64,
}

const OCTAVES: [(f64, f64); 3] = [(32.0, 0.5), (16.0, 0.3), (8.0, 0.2)];

impl Texture {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn value(&self, x: f64, y: f64) -> f32 {
        let mut v = 0.0;
        for (o, &(wavelength, weight)) in OCTAVES.iter().enumerate() {
            v += weight * self.octave(o as u64, x / wavelength, y / wavelength);
        }
        (0.15 + 0.8 * v) as f32
    }

    fn octave(&self, octave: u64, u: f64, v: f64) -> f64 {
        let (iu, iv) = (u.floor(), v.floor());
        let (fu, fv) = (smooth(u - iu), smooth(v - iv));
        let (i, j) = (iu as i64, iv as i64);
        let l = |di: i64, dj: i64| self.lattice(octave, i + di, j + dj);
        let top = l(0, 0) + (l(1, 0) - l(0, 0)) * fu;
        let bottom = l(0, 1) + (l(1, 1) - l(0, 1)) * fu;
        top + (bottom - top) * fv
    }

    fn lattice(&self, octave: u64, i: i64, j: i64) -> f64 {
        let mut h = self.seed ^ octave.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h = splitmix(h ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
        h = splitmix(h ^ (j as u64).wrapping_mul(0x94D0_49BB_1331_11EB));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Exact trajectories, indexed `[frame][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub tracks: Vec<Vec<GtPoint>>,
}

impl GroundTruth {
    pub fn num_frames(&self) -> usize {
        self.tracks.len()
    }

    pub fn num_points(&self) -> usize {
        self.tracks.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<Frame>,
    pub ground_truth: GroundTruth,
}

pub fn render_frame(config: &MotionConfig, texture: &Texture, t: u64) -> Result<Frame> {
    let (w, h) = (config.width, config.height);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let v = match &config.occluder {
                Some(o) if o.covers(t, xf, yf) => Occluder::INTENSITY,
                _ => {
                    let p = config.unwarp(t, [xf, yf])?;
                    texture.value(p[0], p[1])
                }
            };
            data.push(v);
        }
    }
    Frame::gray(w, h, data, t)
}

pub fn ground_truth_at(config: &MotionConfig, t: u64, points: &[[f64; 2]]) -> Result<Vec<GtPoint>> {
    let (w, h) = (config.width as f64, config.height as f64);
    points
        .iter()
        .map(|&p| {
            let [x, y] = config.warp(t, p)?;
            let inside = x >= 0.0 && x < w && y >= 0.0 && y < h;
            let covered = config.occluder.as_ref().is_some_and(|o| o.covers(t, x, y));
            Ok(GtPoint {
                x,
                y,
                visible: inside && !covered,
            })
        })
        .collect()
}

pub fn generate(config: &MotionConfig, points: &[[f64; 2]]) -> Result<SyntheticSequence> {
    config.validate()?;
    let (w, h) = (config.width as f64, config.height as f64);
    for p in points {
        if !(p[0] >= 0.0 && p[0] < w && p[1] >= 0.0 && p[1] < h) {
            return Err(Error::QueryOutOfBounds {
                t: 0,
                x: p[0],
                y: p[1],
                width: config.width,
                height: config.height,
            });
        }
    }
    let texture = Texture::new(config.seed);
    let mut frames = Vec::with_capacity(config.frames);
    let mut tracks = Vec::with_capacity(config.frames);
    for t in 0..config.frames as u64 {
        frames.push(render_frame(config, &texture, t)?);
        tracks.push(ground_truth_at(config, t, points)?);
    }
    Ok(SyntheticSequence {
        frames,
        ground_truth: GroundTruth {
            width: config.width,
            height: config.height,
            tracks,
        },
    })
}
