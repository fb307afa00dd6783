//! Refinement of the current frame's track estimates from a block of buffered tokens.
//!
//! The learned-style backend alternates temporal attention (one track across
//! buffered frames) with spatial attention (tracks within one frame). Masked
//! tokens never enter an attention set, and a track only attends to tracks with
//! a lower or equal id, so tracks registered later cannot change earlier ones.

use std::f32::consts::PI;

use crate::buffer::TokenBlock;
use crate::error::{Error, Result};
use crate::model::config::{Backend, PATCH_AREA, PATCH_SIDE, PYRAMID_FACTORS};
use crate::model::nn::{dot, layer_norm, logistic, relu_in_place, Linear};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefinementDelta {
    /// Location update in input pixels.
    pub position: [f64; 2],
    pub visibility: f32,
    pub confidence: f32,
}

/// Frequencies per encoded scalar; each contributes a sin and a cos.
const PE_FREQS: usize = 4;
pub(crate) const PE_DIM: usize = 3 * 2 * PE_FREQS;
/// Relative positions are fed in units of this many pixels.
const POSITION_SCALE: f64 = 16.0;

fn encode_positional(age: f32, x_norm: f32, y_norm: f32, out: &mut [f32]) {
    let mut k = 0;
    for (value, base) in [(age, 0.25f32), (x_norm, PI), (y_norm, PI)] {
        for f in 0..PE_FREQS {
            let w = base * (1u32 << f) as f32;
            out[k] = (value * w).sin();
            out[k + 1] = (value * w).cos();
            k += 2;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone)]
struct AttentionBlock {
    axis: Axis,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    mlp_in: Linear,
    mlp_out: Linear,
}

impl AttentionBlock {
    fn new(rng: &mut impl rand::Rng, axis: Axis, width: usize) -> Self {
        Self {
            axis,
            q: Linear::random(rng, width, width, 1.0, 0.0),
            k: Linear::random(rng, width, width, 1.0, 0.0),
            v: Linear::random(rng, width, width, 1.0, 0.0),
            o: Linear::random(rng, width, width, 0.5, 0.0),
            mlp_in: Linear::random(rng, width, width, 1.0, 0.02),
            mlp_out: Linear::random(rng, width, width, 0.5, 0.0),
        }
    }

    fn parameter_count(&self) -> usize {
        [&self.q, &self.k, &self.v, &self.o, &self.mlp_in, &self.mlp_out]
            .iter()
            .map(|l| l.parameter_count())
            .sum()
    }
}

/// Tokens that attend together. `keys` are in ascending track/slot order and
/// query `i` sees the first `prefix[i]` of them.
struct Group {
    keys: Vec<usize>,
    queries: Vec<usize>,
    prefix: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct LearnedRefiner {
    width: usize,
    heads: usize,
    input: Linear,
    blocks: Vec<AttentionBlock>,
    head_position: Linear,
    head_visibility: Linear,
    head_confidence: Linear,
}

impl LearnedRefiner {
    pub fn new(rng: &mut impl rand::Rng, corr_dim: usize, width: usize, heads: usize, depth: usize) -> Self {
        let blocks = (0..depth)
            .flat_map(|_| [Axis::Temporal, Axis::Spatial])
            .map(|axis| AttentionBlock::new(rng, axis, width))
            .collect();
        Self {
            width,
            heads,
            input: Linear::random(rng, corr_dim + 4 + PE_DIM, width, 1.0, 0.02),
            blocks,
            head_position: Linear::random(rng, width, 2, 0.5, 0.0),
            head_visibility: Linear::random(rng, width, 1, 0.5, 0.0),
            head_confidence: Linear::random(rng, width, 1, 0.5, 0.0),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.input.parameter_count()
            + self.blocks.iter().map(AttentionBlock::parameter_count).sum::<usize>()
            + self.head_position.parameter_count()
            + self.head_visibility.parameter_count()
            + self.head_confidence.parameter_count()
    }

    fn embed(&self, block: &TokenBlock, frame_size: (usize, usize)) -> Vec<f32> {
        let (slots, n) = (block.slots(), block.num_tracks);
        let last = slots - 1;
        let current_frame = block.frames[last];
        let mut x = vec![0.0f32; slots * n * self.width];
        let mut input = vec![0.0f32; self.input.inputs];
        let d = block.corr_dim;
        for s in 0..slots {
            let age = (current_frame - block.frames[s]) as f32;
            for j in 0..n {
                if !block.is_valid(s, j) {
                    continue;
                }
                let snap = block.snapshot(s, j);
                let anchor = if block.is_valid(last, j) {
                    block.snapshot(last, j).position
                } else {
                    snap.position
                };
                input[..d].copy_from_slice(block.feature(s, j));
                input[d] = ((snap.position[0] - anchor[0]) / POSITION_SCALE) as f32;
                input[d + 1] = ((snap.position[1] - anchor[1]) / POSITION_SCALE) as f32;
                input[d + 2] = snap.visibility;
                input[d + 3] = snap.confidence;
                encode_positional(
                    age,
                    (snap.position[0] / frame_size.0 as f64) as f32,
                    (snap.position[1] / frame_size.1 as f64) as f32,
                    &mut input[d + 4..],
                );
                let t = s * n + j;
                self.input
                    .forward_into(&input, &mut x[t * self.width..(t + 1) * self.width]);
            }
        }
        x
    }

    fn groups(block: &TokenBlock, axis: Axis, last_only: bool) -> Vec<Group> {
        let (slots, n) = (block.slots(), block.num_tracks);
        let last = slots - 1;
        match axis {
            Axis::Temporal => (0..n)
                .filter(|&j| block.is_valid(last, j) || !last_only)
                .map(|j| {
                    let keys: Vec<usize> = (0..slots)
                        .filter(|&s| block.is_valid(s, j))
                        .map(|s| s * n + j)
                        .collect();
                    let queries: Vec<usize> = if last_only {
                        keys.iter().copied().filter(|&t| t / n == last).collect()
                    } else {
                        keys.clone()
                    };
                    let prefix = vec![keys.len(); queries.len()];
                    Group { keys, queries, prefix }
                })
                .filter(|g| !g.queries.is_empty())
                .collect(),
            Axis::Spatial => (0..slots)
                .filter(|&s| !last_only || s == last)
                .map(|s| {
                    let keys: Vec<usize> = (0..n).filter(|&j| block.is_valid(s, j)).map(|j| s * n + j).collect();
                    let prefix = (1..=keys.len()).collect();
                    Group {
                        queries: keys.clone(),
                        keys,
                        prefix,
                    }
                })
                .filter(|g| !g.queries.is_empty())
                .collect(),
        }
    }

    fn apply_block(&self, blk: &AttentionBlock, x: &mut [f32], groups: &[Group], tokens: usize) {
        let w = self.width;
        let hd = w / self.heads;
        let scale = 1.0 / (hd as f32).sqrt();
        let mut is_key = vec![false; tokens];
        let mut is_query = vec![false; tokens];
        for g in groups {
            g.keys.iter().for_each(|&t| is_key[t] = true);
            g.queries.iter().for_each(|&t| is_query[t] = true);
        }
        let mut keys = vec![0.0f32; tokens * w];
        let mut values = vec![0.0f32; tokens * w];
        let mut queries = vec![0.0f32; tokens * w];
        let mut normed = vec![0.0f32; w];
        for t in 0..tokens {
            if !(is_key[t] || is_query[t]) {
                continue;
            }
            layer_norm(&x[t * w..(t + 1) * w], &mut normed);
            if is_key[t] {
                blk.k.forward_into(&normed, &mut keys[t * w..(t + 1) * w]);
                blk.v.forward_into(&normed, &mut values[t * w..(t + 1) * w]);
            }
            if is_query[t] {
                blk.q.forward_into(&normed, &mut queries[t * w..(t + 1) * w]);
            }
        }

        let mut mixed = vec![0.0f32; w];
        let mut update = vec![0.0f32; w];
        let mut hidden = vec![0.0f32; w];
        let mut scores = Vec::new();
        for g in groups {
            for (&qt, &prefix) in g.queries.iter().zip(&g.prefix) {
                let visible = &g.keys[..prefix];
                for h in 0..self.heads {
                    let range = qt * w + h * hd..qt * w + (h + 1) * hd;
                    let qh = &queries[range];
                    scores.clear();
                    scores.extend(
                        visible
                            .iter()
                            .map(|&kt| dot(qh, &keys[kt * w + h * hd..kt * w + (h + 1) * hd]) * scale),
                    );
                    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let mut total = 0.0f32;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    let out = &mut mixed[h * hd..(h + 1) * hd];
                    out.fill(0.0);
                    for (&kt, &s) in visible.iter().zip(&scores) {
                        let vh = &values[kt * w + h * hd..kt * w + (h + 1) * hd];
                        let a = s / total;
                        for (o, v) in out.iter_mut().zip(vh) {
                            *o += a * v;
                        }
                    }
                }
                blk.o.forward_into(&mixed, &mut update);
                let xt = &mut x[qt * w..(qt + 1) * w];
                for (xi, u) in xt.iter_mut().zip(&update) {
                    *xi += u;
                }
                layer_norm(xt, &mut normed);
                blk.mlp_in.forward_into(&normed, &mut hidden);
                relu_in_place(&mut hidden);
                blk.mlp_out.forward_into(&hidden, &mut update);
                for (xi, u) in xt.iter_mut().zip(&update) {
                    *xi += u;
                }
            }
        }
    }

    fn forward(&self, block: &TokenBlock, frame_size: (usize, usize)) -> Vec<RefinementDelta> {
        let (slots, n) = (block.slots(), block.num_tracks);
        let last = slots - 1;
        let tokens = slots * n;
        let mut x = self.embed(block, frame_size);
        let final_pair = self.blocks.len() - 2;
        for (i, blk) in self.blocks.iter().enumerate() {
            // only current-frame outputs are read, so the last pair skips older queries
            let groups = Self::groups(block, blk.axis, i >= final_pair);
            self.apply_block(blk, &mut x, &groups, tokens);
        }
        let w = self.width;
        let mut normed = vec![0.0f32; w];
        (0..n)
            .map(|j| {
                if !block.is_valid(last, j) {
                    return RefinementDelta::default();
                }
                let t = last * n + j;
                layer_norm(&x[t * w..(t + 1) * w], &mut normed);
                let p = self.head_position.forward(&normed);
                let v = self.head_visibility.forward(&normed)[0];
                let c = self.head_confidence.forward(&normed)[0];
                RefinementDelta {
                    position: [p[0].tanh() as f64, p[1].tanh() as f64],
                    visibility: v.tanh(),
                    confidence: c.tanh(),
                }
            })
            .collect()
    }
}

/// Sub-cell peak location (in patch cells, relative to the center): the
/// argmax cell plus the expected offset under a softmax of `row / temperature`
/// restricted to its 3x3 neighborhood. Ties go to the first maximum.
pub fn soft_argmax(row: &[f32], temperature: f32) -> [f32; 2] {
    debug_assert_eq!(row.len(), PATCH_AREA);
    let side = PATCH_SIDE as i64;
    let mut best = 0;
    for (b, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = b;
        }
    }
    let (cx, cy) = (best as i64 % side, best as i64 / side);
    let mut weights = [0.0f32; 9];
    for (k, w) in weights.iter_mut().enumerate() {
        let (x, y) = (cx + k as i64 % 3 - 1, cy + k as i64 / 3 - 1);
        if (0..side).contains(&x) && (0..side).contains(&y) {
            *w = ((row[(y * side + x) as usize] - row[best]) / temperature).exp();
        }
    }
    let total: f32 = weights.iter().sum();
    // neighbors k and 8-k sit at opposite offsets; pairing them makes symmetric rows cancel exactly
    let mut acc = [0.0f32; 2];
    for k in 0..4 {
        let diff = weights[k] - weights[8 - k];
        acc[0] += diff * (k % 3) as f32 - diff;
        acc[1] += diff * (k / 3) as f32 - diff;
    }
    let half = (PATCH_SIDE / 2) as f32;
    [(cx as f32 - half) + acc[0] / total, (cy as f32 - half) + acc[1] / total]
}

fn analytic(block: &TokenBlock, current_maps: &[f32], params: &ModelParams) -> Vec<RefinementDelta> {
    let cfg = params.config();
    let last = block.slots() - 1;
    let score = |peak: f32, slope: f32| logistic((peak - cfg.visibility_pivot) / slope);
    (0..block.num_tracks)
        .map(|j| {
            if !block.is_valid(last, j) {
                return RefinementDelta::default();
            }
            let maps = &current_maps[j * SHIFT_MAPS_LEN..(j + 1) * SHIFT_MAPS_LEN];
            let peak_of = |l: usize| {
                maps[l * PATCH_AREA..(l + 1) * PATCH_AREA]
                    .iter()
                    .copied()
                    .fold(f32::NEG_INFINITY, f32::max)
            };
            let peak = peak_of(0);
            let snap = block.snapshot(last, j);
            let vis_target = score(peak, cfg.visibility_slope);
            let conf_target = score(peak, 2.0 * cfg.visibility_slope);
            // finest level that still matches; a weak match everywhere leaves the motion prior alone
            let mut position = [0.0, 0.0];
            for (l, &factor) in PYRAMID_FACTORS.iter().enumerate() {
                let weight = score(peak_of(l), cfg.visibility_slope);
                if weight >= 0.5 {
                    let offset = soft_argmax(&maps[l * PATCH_AREA..(l + 1) * PATCH_AREA], cfg.softargmax_temperature);
                    let step = factor as f64 * weight as f64;
                    position = [offset[0] as f64 * step, offset[1] as f64 * step];
                    break;
                }
            }
            RefinementDelta {
                position,
                visibility: vis_target - snap.visibility,
                confidence: conf_target - snap.confidence,
            }
        })
        .collect()
}

/// Length of the per-track analytic input: one shift map per pyramid level.
pub const SHIFT_MAPS_LEN: usize = PYRAMID_FACTORS.len() * PATCH_AREA;

/// Deltas for every column of `block`, read at its newest slot. Columns not
/// valid at the newest slot get a zero delta. `current_maps` holds, per track,
/// the shift maps of the current correlation volume for every level
/// ([`SHIFT_MAPS_LEN`] values); only the analytic backend reads it.
pub fn refine(
    block: &TokenBlock,
    current_maps: &[f32],
    frame_size: (usize, usize),
    params: &ModelParams,
) -> Result<Vec<RefinementDelta>> {
    block.check_shape()?;
    if block.slots() == 0 {
        return Err(Error::EmptyBuffer);
    }
    if block.corr_dim != params.config().corr_dim {
        return Err(Error::DimensionMismatch {
            what: "token corr_dim",
            expected: params.config().corr_dim,
            actual: block.corr_dim,
        });
    }
    if block.num_tracks == 0 {
        return Ok(Vec::new());
    }
    match params.config().backend {
        Backend::Learned => Ok(params.refiner.forward(block, frame_size)),
        Backend::Analytic => {
            if current_maps.len() != block.num_tracks * SHIFT_MAPS_LEN {
                return Err(Error::DimensionMismatch {
                    what: "current shift maps",
                    expected: block.num_tracks * SHIFT_MAPS_LEN,
                    actual: current_maps.len(),
                });
            }
            Ok(analytic(block, current_maps, params))
        }
    }
}
