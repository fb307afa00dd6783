//! Dense building blocks shared by the pyramid, the correlation projection and
//! the attention stack. Every reduction runs in a fixed order so results are
//! bit-identical for identical inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent random stream for one parameter group.
pub(crate) fn param_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed-order dot product with eight accumulators.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub(crate) fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Affine map with weights stored input-major (`weights[i * out + o]`), so a
/// forward pass is a sequence of contiguous axpy updates.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Linear {
    /// Uniform Glorot initialization scaled by `gain`; biases drawn at `bias_scale`.
    pub fn random(rng: &mut impl Rng, inputs: usize, outputs: usize, gain: f32, bias_scale: f32) -> Self {
        let limit = gain * (6.0 / (inputs + outputs) as f32).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        let bias = (0..outputs)
            .map(|_| {
                if bias_scale > 0.0 {
                    rng.gen_range(-bias_scale..=bias_scale)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    pub fn forward_into(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        y.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(y, xi, &self.weights[i * self.outputs..(i + 1) * self.outputs]);
            }
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut y = vec![0.0; self.outputs];
        self.forward_into(x, &mut y);
        y
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

pub(crate) fn layer_norm(x: &[f32], out: &mut [f32]) {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - mean) * inv;
    }
}

pub(crate) fn relu_in_place(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

pub(crate) fn logistic(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f32> = (0..37).map(|i| i as f32 * 0.25).collect();
        let b: Vec<f32> = (0..37).map(|i| 1.0 - i as f32 * 0.01).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
        assert!((dot(&a, &b) as f64 - naive).abs() < 1e-3);
    }

    #[test]
    fn linear_is_affine() {
        let mut rng = param_rng(1, 0);
        let lin = Linear::random(&mut rng, 5, 3, 1.0, 0.1);
        let zero = lin.forward(&[0.0; 5]);
        let x = [1.0, -2.0, 0.5, 0.0, 3.0];
        let y = lin.forward(&x);
        let y2 = lin.forward(&x.map(|v| v * 2.0));
        for o in 0..3 {
            assert!(((y2[o] - zero[o]) - 2.0 * (y[o] - zero[o])).abs() < 1e-5);
        }
    }

    #[test]
    fn layer_norm_centers_and_scales() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 4];
        layer_norm(&x, &mut out);
        let mean: f32 = out.iter().sum::<f32>() / 4.0;
        let var: f32 = out.iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3);
    }
}
