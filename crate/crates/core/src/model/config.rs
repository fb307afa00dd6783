use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Downsample factors of the feature pyramid, finest first.
pub const PYRAMID_FACTORS: [usize; 4] = [4, 8, 12, 16];
/// Side length of a sampled patch.
pub const PATCH_SIDE: usize = 7;
pub const PATCH_AREA: usize = PATCH_SIDE * PATCH_SIDE;
/// Entries in one level of the 4D correlation tensor.
pub const CORR_LEVEL_SIZE: usize = PATCH_AREA * PATCH_AREA;
/// Smallest frame the pyramid accepts.
pub const MIN_FRAME_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Seeded-random attention stack standing in for trained weights.
    Learned,
    /// Soft-argmax over the finest correlation row.
    Analytic,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Backend::Learned),
            "analytic" => Ok(Backend::Analytic),
            other => Err(Error::InvalidConfig(format!("unknown backend {other:?}"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Learned => "learned",
            Backend::Analytic => "analytic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Channels per pyramid level, including the raw-intensity channel.
    pub feature_dim: usize,
    /// Hidden channels of the convolution stack.
    pub conv_channels: usize,
    /// Length of a correlation feature vector.
    pub corr_dim: usize,
    /// Hidden units per level in the correlation projection.
    pub corr_hidden: usize,
    pub width: usize,
    pub heads: usize,
    /// Number of (temporal, spatial) attention block pairs.
    pub depth: usize,
    pub seed: u64,
    pub backend: Backend,
    pub softargmax_temperature: f32,
    /// Peak patch match score at which the analytic backend's visibility target is 0.5.
    pub visibility_pivot: f32,
    pub visibility_slope: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            conv_channels: 16,
            corr_dim: 256,
            corr_hidden: 16,
            width: 128,
            heads: 4,
            depth: 2,
            seed: 42,
            backend: Backend::Analytic,
            softargmax_temperature: 0.1,
            visibility_pivot: 0.35,
            visibility_slope: 0.05,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.feature_dim < 2 {
            return bad("feature_dim must be at least 2");
        }
        if self.conv_channels == 0 || self.corr_hidden == 0 {
            return bad("conv_channels and corr_hidden must be positive");
        }
        if self.corr_dim == 0 {
            return bad("corr_dim must be positive");
        }
        if self.width == 0 || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad("width must be a positive multiple of heads");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if !(self.softargmax_temperature > 0.0) || !(self.visibility_slope > 0.0) {
            return bad("temperature and visibility slope must be positive");
        }
        Ok(())
    }
}
