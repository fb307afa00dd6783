//! Toy-scale tracking network: feature pyramid, patch sampling, correlation
//! features and the refinement step.

mod config;
mod correlation;
pub(crate) mod nn;
mod patch;
mod pyramid;
mod refine;

pub use config::{Backend, ModelConfig, CORR_LEVEL_SIZE, MIN_FRAME_SIDE, PATCH_AREA, PATCH_SIDE, PYRAMID_FACTORS};
pub use correlation::{correlate, correlation_feature, correlation_volume, CorrelationFeature, CorrelationVolume};
pub use patch::{from_level_coord, sample_patch_features, to_level_coord, PatchFeatures};
pub use pyramid::{extract_feature_pyramid, FeatureMap, FeaturePyramid};
pub use refine::{refine, soft_argmax, RefinementDelta, SHIFT_MAPS_LEN};

use crate::error::Result;
use correlation::CorrProjection;
use pyramid::ConvStack;
use refine::LearnedRefiner;

/// Immutable seeded weights for every stage of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    pub(crate) conv: ConvStack,
    pub(crate) corr: CorrProjection,
    pub(crate) refiner: LearnedRefiner,
}

impl ModelParams {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        Ok(Self {
            config: config.clone(),
            conv: ConvStack::new(&mut nn::param_rng(seed, 1), config.conv_channels, config.feature_dim),
            corr: CorrProjection::new(
                &mut nn::param_rng(seed, 2),
                PYRAMID_FACTORS.len(),
                config.corr_hidden,
                config.corr_dim,
            ),
            refiner: LearnedRefiner::new(
                &mut nn::param_rng(seed, 3),
                config.corr_dim,
                config.width,
                config.heads,
                config.depth,
            ),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.conv.parameter_count() + self.corr.parameter_count() + self.refiner.parameter_count()
    }
}
