use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::model::config::{MIN_FRAME_SIDE, PYRAMID_FACTORS};
use crate::model::nn::Linear;
use crate::model::ModelParams;

/// Dense `width x height x dim` feature grid, stored `[y][x][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, dim: usize) -> Self {
        Self {
            width,
            height,
            dim,
            data: vec![0.0; width * height * dim],
        }
    }

    #[inline]
    pub fn texel(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.dim;
        &self.data[base..base + self.dim]
    }

    #[inline]
    fn texel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let base = (y * self.width + x) * self.dim;
        &mut self.data[base..base + self.dim]
    }
}

/// Multi-scale features of one frame, one level per entry of [`PYRAMID_FACTORS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    /// Input frame size the pyramid was built from.
    pub frame_width: usize,
    pub frame_height: usize,
}

impl FeaturePyramid {
    pub fn dim(&self) -> usize {
        self.levels[0].dim
    }
}

const NORM_FLOOR: f32 = 0.1;

/// Three 3x3 convolutions (tanh, tanh, linear) applied to every pyramid level.
#[derive(Debug, Clone)]
pub(crate) struct ConvStack {
    layers: [Linear; 3],
    raw_gain: f32,
    /// Output on a featureless input; subtracted so flat regions correlate with nothing.
    flat_response: Vec<f32>,
}

impl ConvStack {
    pub fn new(rng: &mut impl rand::Rng, hidden: usize, feature_dim: usize) -> Self {
        let layers = [
            Linear::random(rng, 9, hidden, 4.0, 0.1),
            Linear::random(rng, 9 * hidden, hidden, 1.5, 0.1),
            Linear::random(rng, 9 * hidden, feature_dim - 1, 1.0, 0.0),
        ];
        let mut flat = vec![0.0f32; 1];
        for (i, layer) in layers.iter().enumerate() {
            let mut next = layer.forward(&flat.repeat(9));
            if i < 2 {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            flat = next;
        }
        Self {
            layers,
            raw_gain: 2.0,
            flat_response: flat,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Linear::parameter_count).sum()
    }

    fn apply(&self, pooled: &FeatureMap) -> FeatureMap {
        let pooled = &local_contrast(pooled);
        let h1 = conv3x3(pooled, &self.layers[0], true);
        let h2 = conv3x3(&h1, &self.layers[1], true);
        let h3 = conv3x3(&h2, &self.layers[2], false);
        let dim = h3.dim + 1;
        let mut out = FeatureMap::zeros(pooled.width, pooled.height, dim);
        for y in 0..pooled.height {
            for x in 0..pooled.width {
                let raw = pooled.texel(x, y)[0] * self.raw_gain;
                let conv = h3.texel(x, y);
                let dst = out.texel_mut(x, y);
                dst[0] = raw;
                for ((d, v), m) in dst[1..].iter_mut().zip(conv).zip(&self.flat_response) {
                    *d = v - m;
                }
                // soft normalization: featureless texels shrink toward zero instead of becoming unit noise
                let norm = (dst.iter().map(|v| v * v).sum::<f32>() + NORM_FLOOR * NORM_FLOOR).sqrt();
                for v in dst.iter_mut() {
                    *v /= norm;
                }
            }
        }
        out
    }
}

/// 3x3 convolution with edge-replicate padding, expressed as im2col + [`Linear`].
fn conv3x3(input: &FeatureMap, layer: &Linear, tanh: bool) -> FeatureMap {
    let (w, h, c) = (input.width, input.height, input.dim);
    debug_assert_eq!(layer.inputs, 9 * c);
    let mut out = FeatureMap::zeros(w, h, layer.outputs);
    let mut patch = vec![0.0f32; 9 * c];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1i64..=1 {
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -1i64..=1 {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    patch[k * c..(k + 1) * c].copy_from_slice(input.texel(sx, sy));
                    k += 1;
                }
            }
            let dst = out.texel_mut(x, y);
            layer.forward_into(&patch, dst);
            if tanh {
                for v in dst.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
    }
    out
}

/// Subtracts the 5x5 local mean (edge-replicate) and rescales.
fn local_contrast(input: &FeatureMap) -> FeatureMap {
    const RADIUS: i64 = 2;
    const GAIN: f32 = 4.0;
    let (w, h) = (input.width, input.height);
    let mut out = FeatureMap::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for dy in -RADIUS..=RADIUS {
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                for dx in -RADIUS..=RADIUS {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += input.data[sy * w + sx];
                }
            }
            let mean = acc / ((2 * RADIUS + 1) * (2 * RADIUS + 1)) as f32;
            out.data[y * w + x] = (input.data[y * w + x] - mean) * GAIN;
        }
    }
    out
}

/// Box-average the frame's intensity (centered on 0.5) into `floor(W/f) x floor(H/f)` cells.
fn pool_intensity(frame: &Frame, factor: usize) -> FeatureMap {
    let lw = frame.width() / factor;
    let lh = frame.height() / factor;
    let mut out = FeatureMap::zeros(lw, lh, 1);
    let norm = 1.0 / (factor * factor) as f32;
    for ly in 0..lh {
        for lx in 0..lw {
            let mut acc = 0.0f32;
            for y in ly * factor..(ly + 1) * factor {
                for x in lx * factor..(lx + 1) * factor {
                    acc += frame.intensity(x, y);
                }
            }
            out.data[ly * lw + lx] = acc * norm - 0.5;
        }
    }
    out
}

pub fn extract_feature_pyramid(frame: &Frame, params: &ModelParams) -> Result<FeaturePyramid> {
    if frame.width() < MIN_FRAME_SIDE || frame.height() < MIN_FRAME_SIDE {
        return Err(Error::FrameTooSmall {
            width: frame.width(),
            height: frame.height(),
            min: MIN_FRAME_SIDE,
        });
    }
    let levels = PYRAMID_FACTORS
        .iter()
        .map(|&f| params.conv.apply(&pool_intensity(frame, f)))
        .collect();
    Ok(FeaturePyramid {
        levels,
        frame_width: frame.width(),
        frame_height: frame.height(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn textured(w: usize, h: usize) -> Frame {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f32, (i / w) as f32);
                0.5 + 0.25 * (x * 0.37).sin() * (y * 0.23).cos()
            })
            .collect();
        Frame::gray(w, h, data, 0).unwrap()
    }

    #[test]
    fn level_dims_follow_floor_rule() {
        let params = ModelParams::new(&ModelConfig::default()).unwrap();
        let pyr = extract_feature_pyramid(&textured(512, 384), &params).unwrap();
        let dims: Vec<_> = pyr.levels.iter().map(|l| (l.width, l.height, l.dim)).collect();
        assert_eq!(dims, vec![(128, 96, 32), (64, 48, 32), (42, 32, 32), (32, 24, 32)]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let params = ModelParams::new(&ModelConfig::default()).unwrap();
        let frame = textured(96, 80);
        let a = extract_feature_pyramid(&frame, &params).unwrap();
        let b = extract_feature_pyramid(&frame, &ModelParams::new(&ModelConfig::default()).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_frame_gives_zero_features() {
        let params = ModelParams::new(&ModelConfig::default()).unwrap();
        for value in [0.0, 0.3, 1.0] {
            let frame = Frame::gray(80, 64, vec![value; 80 * 64], 0).unwrap();
            let pyr = extract_feature_pyramid(&frame, &params).unwrap();
            for level in &pyr.levels {
                assert!(level.data.iter().all(|v| v.abs() < 1e-3));
            }
        }
    }

    #[test]
    fn rejects_small_frames() {
        let params = ModelParams::new(&ModelConfig::default()).unwrap();
        let frame = Frame::gray(63, 100, vec![0.0; 6300], 0).unwrap();
        assert!(matches!(
            extract_feature_pyramid(&frame, &params),
            Err(Error::FrameTooSmall { .. })
        ));
    }

    #[test]
    fn texel_norms_bounded_by_one() {
        let params = ModelParams::new(&ModelConfig::default()).unwrap();
        let pyr = extract_feature_pyramid(&textured(64, 64), &params).unwrap();
        let mut strong = 0;
        for level in &pyr.levels {
            for t in level.data.chunks(level.dim) {
                let n: f32 = t.iter().map(|v| v * v).sum::<f32>().sqrt();
                assert!(n <= 1.0 + 1e-6);
                strong += usize::from(n > 0.9);
            }
        }
        assert!(strong > 0);
    }
}
