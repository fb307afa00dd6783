use crate::error::{Error, Result};
use crate::model::config::{CORR_LEVEL_SIZE, PATCH_AREA, PATCH_SIDE};
use crate::model::nn::{axpy, relu_in_place, Linear};
use crate::model::patch::PatchFeatures;
use crate::model::ModelParams;

/// Full pairwise inner products between a query patch and a current patch:
/// per level, `values[a * 49 + b] = <query cell a, current cell b>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    pub levels: Vec<Vec<f32>>,
}

impl CorrelationVolume {
    /// Similarity of the query patch center against all 49 current cells.
    pub fn center_row(&self, level: usize) -> &[f32] {
        let center = PATCH_AREA / 2;
        &self.levels[level][center * PATCH_AREA..(center + 1) * PATCH_AREA]
    }

    /// Patch-to-patch match score for each of the 49 cell shifts: the mean of
    /// `<query[b], current[b + shift]>` over query cells whose shifted partner
    /// lies inside the patch. Laid out like a patch, shift (0, 0) at the center.
    pub fn shift_map(&self, level: usize) -> [f32; PATCH_AREA] {
        let side = PATCH_SIDE as i64;
        let half = side / 2;
        let vol = &self.levels[level];
        let mut out = [0.0f32; PATCH_AREA];
        for (s, slot) in out.iter_mut().enumerate() {
            let (sx, sy) = (s as i64 % side - half, s as i64 / side - half);
            let mut acc = 0.0f32;
            let mut count = 0;
            for qy in 0.max(-sy)..side.min(side - sy) {
                for qx in 0.max(-sx)..side.min(side - sx) {
                    let q = (qy * side + qx) as usize;
                    let c = ((qy + sy) * side + qx + sx) as usize;
                    acc += vol[q * PATCH_AREA + c];
                    count += 1;
                }
            }
            *slot = acc / count as f32;
        }
        out
    }

    pub fn at(&self, level: usize, query_cell: usize, current_cell: usize) -> f32 {
        self.levels[level][query_cell * PATCH_AREA + current_cell]
    }
}

/// The cached unit: a fixed-length projection of one correlation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFeature {
    pub values: Vec<f32>,
}

pub fn correlation_volume(query: &PatchFeatures, current: &PatchFeatures) -> Result<CorrelationVolume> {
    if query.dim != current.dim {
        return Err(Error::DimensionMismatch {
            what: "patch feature dim",
            expected: query.dim,
            actual: current.dim,
        });
    }
    if query.levels.len() != current.levels.len() {
        return Err(Error::DimensionMismatch {
            what: "patch level count",
            expected: query.levels.len(),
            actual: current.levels.len(),
        });
    }
    let dim = query.dim;
    let mut transposed = vec![0.0f32; dim * PATCH_AREA];
    let levels = query
        .levels
        .iter()
        .zip(&current.levels)
        .map(|(q, c)| {
            // current cells laid out channel-major so each query channel is one axpy
            for b in 0..PATCH_AREA {
                for k in 0..dim {
                    transposed[k * PATCH_AREA + b] = c[b * dim + k];
                }
            }
            let mut out = vec![0.0f32; CORR_LEVEL_SIZE];
            for a in 0..PATCH_AREA {
                let row = &mut out[a * PATCH_AREA..(a + 1) * PATCH_AREA];
                for k in 0..dim {
                    axpy(row, q[a * dim + k], &transposed[k * PATCH_AREA..(k + 1) * PATCH_AREA]);
                }
            }
            out
        })
        .collect();
    Ok(CorrelationVolume { levels })
}

/// Per-level `2401 -> hidden` ReLU layers followed by a joint projection to `corr_dim`.
#[derive(Debug, Clone)]
pub(crate) struct CorrProjection {
    per_level: Vec<Linear>,
    joint: Linear,
}

impl CorrProjection {
    pub fn new(rng: &mut impl rand::Rng, levels: usize, hidden: usize, corr_dim: usize) -> Self {
        Self {
            per_level: (0..levels)
                .map(|_| Linear::random(rng, CORR_LEVEL_SIZE, hidden, 2.0, 0.05))
                .collect(),
            joint: Linear::random(rng, levels * hidden, corr_dim, 1.0, 0.05),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.per_level.iter().map(Linear::parameter_count).sum::<usize>() + self.joint.parameter_count()
    }

    pub fn project(&self, volume: &CorrelationVolume) -> Vec<f32> {
        let hidden = self.per_level[0].outputs;
        let mut concat = vec![0.0f32; self.per_level.len() * hidden];
        for (l, (layer, corr)) in self.per_level.iter().zip(&volume.levels).enumerate() {
            let dst = &mut concat[l * hidden..(l + 1) * hidden];
            layer.forward_into(corr, dst);
            relu_in_place(dst);
        }
        self.joint.forward(&concat)
    }
}

/// Correlation volume of `current` against `query`, projected to a feature vector.
/// The volume is returned as well since the analytic backend reads it directly.
pub fn correlate(
    query: &PatchFeatures,
    current: &PatchFeatures,
    params: &ModelParams,
) -> Result<(CorrelationFeature, CorrelationVolume)> {
    if query.dim != params.config().feature_dim {
        return Err(Error::DimensionMismatch {
            what: "patch feature dim vs model",
            expected: params.config().feature_dim,
            actual: query.dim,
        });
    }
    let volume = correlation_volume(query, current)?;
    let values = params.corr.project(&volume);
    Ok((CorrelationFeature { values }, volume))
}

pub fn correlation_feature(
    query: &PatchFeatures,
    current: &PatchFeatures,
    params: &ModelParams,
) -> Result<CorrelationFeature> {
    correlate(query, current, params).map(|(f, _)| f)
}
