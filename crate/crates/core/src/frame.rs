use crate::error::{Error, Result};

/// A single video frame. Values are row-major, interleaved by channel, in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    index: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>, index: u64) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!("{channels} channels, expected 1 or 3")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                what: "frame data",
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidFrame(format!("value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            index,
        })
    }

    /// Single-channel frame from a row-major intensity grid.
    pub fn gray(width: usize, height: usize, data: Vec<f32>, index: u64) -> Result<Self> {
        Self::new(width, height, 1, data, index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    /// Mean over channels at an integer pixel.
    pub fn intensity(&self, x: usize, y: usize) -> f32 {
        let base = (y * self.width + x) * self.channels;
        let px = &self.data[base..base + self.channels];
        if self.channels == 1 {
            px[0]
        } else {
            px.iter().sum::<f32>() / self.channels as f32
        }
    }

    /// Bilinear intensity lookup with edge clamping; pixel centers sit on integer coordinates.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (xc - x0 as f64) as f32;
        let fy = (yc - y0 as f64) as f32;
        let top = self.intensity(x0, y0) * (1.0 - fx) + self.intensity(x1, y0) * fx;
        let bottom = self.intensity(x0, y1) * (1.0 - fx) + self.intensity(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}
