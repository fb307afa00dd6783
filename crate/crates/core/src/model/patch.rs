use crate::error::{Error, Result};
use crate::model::config::{PATCH_AREA, PATCH_SIDE, PYRAMID_FACTORS};
use crate::model::pyramid::{FeatureMap, FeaturePyramid};

/// Per-level `7 x 7 x dim` grids sampled around one location, stored `[dy][dx][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    pub dim: usize,
    pub levels: Vec<Vec<f32>>,
}

impl PatchFeatures {
    pub fn zeros(levels: usize, dim: usize) -> Self {
        Self {
            dim,
            levels: vec![vec![0.0; PATCH_AREA * dim]; levels],
        }
    }

    /// Feature vector at grid cell `(dx, dy)` of `level`, with `dx, dy` in `0..7`.
    pub fn cell(&self, level: usize, dx: usize, dy: usize) -> &[f32] {
        let base = (dy * PATCH_SIDE + dx) * self.dim;
        &self.levels[level][base..base + self.dim]
    }
}

/// Maps an input-pixel coordinate to the texel grid of a level downsampled by
/// `factor`. Texel `i` averages input pixels `i*f .. (i+1)*f`, so its center
/// sits at input coordinate `i*f + (f-1)/2`.
#[inline]
pub fn to_level_coord(x: f64, factor: usize) -> f64 {
    let f = factor as f64;
    (x - (f - 1.0) * 0.5) / f
}

#[inline]
pub fn from_level_coord(u: f64, factor: usize) -> f64 {
    let f = factor as f64;
    u * f + (f - 1.0) * 0.5
}

/// Bilinear lookup with edge clamping, accumulated into `out`.
fn bilinear_into(map: &FeatureMap, u: f64, v: f64, out: &mut [f32]) {
    let uc = u.clamp(0.0, (map.width - 1) as f64);
    let vc = v.clamp(0.0, (map.height - 1) as f64);
    let x0 = uc.floor() as usize;
    let y0 = vc.floor() as usize;
    let x1 = (x0 + 1).min(map.width - 1);
    let y1 = (y0 + 1).min(map.height - 1);
    let fx = (uc - x0 as f64) as f32;
    let fy = (vc - y0 as f64) as f32;
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    let (t00, t10, t01, t11) = (
        map.texel(x0, y0),
        map.texel(x1, y0),
        map.texel(x0, y1),
        map.texel(x1, y1),
    );
    for c in 0..map.dim {
        out[c] = w00 * t00[c] + w10 * t10[c] + w01 * t01[c] + w11 * t11[c];
    }
}

/// Samples a 7x7 grid with unit texel spacing per level, centered on `location`
/// (input-pixel coordinates).
pub fn sample_patch_features(pyramid: &FeaturePyramid, location: [f64; 2]) -> Result<PatchFeatures> {
    if !location[0].is_finite() || !location[1].is_finite() {
        return Err(Error::NonFinite("patch location"));
    }
    let dim = pyramid.dim();
    let half = (PATCH_SIDE / 2) as f64;
    let levels = pyramid
        .levels
        .iter()
        .zip(PYRAMID_FACTORS)
        .map(|(map, factor)| {
            let cu = to_level_coord(location[0], factor);
            let cv = to_level_coord(location[1], factor);
            let mut grid = vec![0.0f32; PATCH_AREA * dim];
            for dy in 0..PATCH_SIDE {
                for dx in 0..PATCH_SIDE {
                    let cell = (dy * PATCH_SIDE + dx) * dim;
                    bilinear_into(
                        map,
                        cu + dx as f64 - half,
                        cv + dy as f64 - half,
                        &mut grid[cell..cell + dim],
                    );
                }
            }
            grid
        })
        .collect();
    Ok(PatchFeatures { dim, levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pyramid whose texel values encode their own coordinates.
    fn ramp_pyramid() -> FeaturePyramid {
        let levels = PYRAMID_FACTORS
            .iter()
            .map(|&f| {
                let (w, h, d) = (128 / f, 96 / f, 3);
                let mut map = FeatureMap::zeros(w, h, d);
                for y in 0..h {
                    for x in 0..w {
                        let base = (y * w + x) * d;
                        map.data[base] = x as f32;
                        map.data[base + 1] = y as f32;
                        map.data[base + 2] = ((x * 7 + y * 13) % 5) as f32;
                    }
                }
                map
            })
            .collect();
        FeaturePyramid {
            levels,
            frame_width: 128,
            frame_height: 96,
        }
    }

    #[test]
    fn integer_level_coords_read_texels_directly() {
        let pyr = ramp_pyramid();
        for (level, &f) in PYRAMID_FACTORS.iter().enumerate() {
            let (u, v) = (4usize, 3usize);
            let loc = [from_level_coord(u as f64, f), from_level_coord(v as f64, f)];
            let patch = sample_patch_features(&pyr, loc).unwrap();
            let map = &pyr.levels[level];
            for dy in 0..7 {
                for dx in 0..7 {
                    let x = (u + dx).saturating_sub(3).min(map.width - 1);
                    let y = (v + dy).saturating_sub(3).min(map.height - 1);
                    assert_eq!(
                        patch.cell(level, dx, dy),
                        map.texel(x, y),
                        "level {level} cell ({dx},{dy})"
                    );
                }
            }
        }
    }

    #[test]
    fn far_outside_repeats_corner_texel() {
        let pyr = ramp_pyramid();
        let patch = sample_patch_features(&pyr, [-1000.0, -1000.0]).unwrap();
        for (level, map) in pyr.levels.iter().enumerate() {
            for cell in patch.levels[level].chunks(patch.dim) {
                assert_eq!(cell, map.texel(0, 0));
            }
        }
    }

    #[test]
    fn half_texel_offset_averages_horizontal_neighbors() {
        let pyr = ramp_pyramid();
        let level = 0;
        let f = PYRAMID_FACTORS[level];
        let (u, v) = (10usize, 8usize);
        let base = [from_level_coord(u as f64, f), from_level_coord(v as f64, f)];
        let shifted = sample_patch_features(&pyr, [base[0] + 0.5 * f as f64, base[1]]).unwrap();
        let map = &pyr.levels[level];
        for dy in 0..7 {
            for dx in 0..7 {
                let (x, y) = (u + dx - 3, v + dy - 3);
                let left = map.texel(x, y);
                let right = map.texel(x + 1, y);
                let got = shifted.cell(level, dx, dy);
                for c in 0..3 {
                    let want = 0.5 * left[c] + 0.5 * right[c];
                    assert!((got[c] - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rejects_non_finite_locations() {
        let pyr = ramp_pyramid();
        assert!(sample_patch_features(&pyr, [f64::NAN, 0.0]).is_err());
        assert!(sample_patch_features(&pyr, [0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn sampling_is_lipschitz_in_location() {
        let pyr = ramp_pyramid();
        let max_step = pyr.levels[0].data.chunks(3).map(|t| t[2]).fold(0.0f32, f32::max);
        let step = 0.01;
        let mut x = 20.0;
        while x < 60.0 {
            let a = sample_patch_features(&pyr, [x, 30.0]).unwrap();
            let b = sample_patch_features(&pyr, [x + step, 30.0]).unwrap();
            for (va, vb) in a.levels[0].iter().zip(&b.levels[0]) {
                // per-texel slope bounded by the largest neighbor difference (ramp: 1, pattern: max_step)
                let slope = (vb - va).abs() as f64 / (step / 4.0);
                assert!(slope <= max_step.max(1.0) as f64 + 1e-2);
            }
            x += 0.37;
        }
    }
}
