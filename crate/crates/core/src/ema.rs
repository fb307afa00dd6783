//! Exponential-moving-average flow and the location initialization it drives.

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaFlowState {
    pub flow: [f64; 2],
    pub alpha: f64,
    /// Number of positions accepted so far.
    pub observed_positions: usize,
}

impl EmaFlowState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1]")));
        }
        Ok(Self {
            flow: [0.0; 2],
            alpha,
            observed_positions: 0,
        })
    }

    /// Blends the latest displacement into the flow:
    /// `flow = alpha * (prev - prev2) + (1 - alpha) * flow`.
    pub fn update_flow(&self, prev: [f64; 2], prev2: [f64; 2]) -> Result<Self> {
        if self.observed_positions < 2 {
            return Err(Error::InvalidConfig(format!(
                "flow update needs two positions, have {}",
                self.observed_positions
            )));
        }
        if prev.iter().chain(&prev2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow update position"));
        }
        let a = self.alpha;
        let flow = [
            a * (prev[0] - prev2[0]) + (1.0 - a) * self.flow[0],
            a * (prev[1] - prev2[1]) + (1.0 - a) * self.flow[1],
        ];
        Ok(Self { flow, ..*self })
    }
}

/// `prev + flow`, unclamped.
pub fn init_location(prev: [f64; 2], flow: [f64; 2]) -> Result<[f64; 2]> {
    if prev.iter().chain(&flow).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("init location input"));
    }
    Ok([prev[0] + flow[0], prev[1] + flow[1]])
}

/// How new frames are seeded before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Ema,
    /// Previous position, no motion prior.
    Previous,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ema" => Ok(InitMode::Ema),
            "previous" => Ok(InitMode::Previous),
            other => Err(Error::InvalidConfig(format!("unknown init mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for InitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMode::Ema => "ema",
            InitMode::Previous => "previous",
        })
    }
}

/// Per-track motion history: the EMA state and the last two accepted positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionTracker {
    pub state: EmaFlowState,
    last: [f64; 2],
    before_last: [f64; 2],
}

impl MotionTracker {
    pub fn start(alpha: f64, position: [f64; 2]) -> Result<Self> {
        let mut state = EmaFlowState::new(alpha)?;
        state.observed_positions = 1;
        Ok(Self {
            state,
            last: position,
            before_last: position,
        })
    }

    pub fn last_position(&self) -> [f64; 2] {
        self.last
    }

    /// Initial location for the next frame. With fewer than two positions the
    /// flow stays zero and this is the last position.
    pub fn predict(&mut self, mode: InitMode) -> Result<[f64; 2]> {
        if mode == InitMode::Ema && self.state.observed_positions >= 2 {
            self.state = self.state.update_flow(self.last, self.before_last)?;
        }
        let flow = match mode {
            InitMode::Ema => self.state.flow,
            InitMode::Previous => [0.0; 2],
        };
        init_location(self.last, flow)
    }

    /// Records the final position estimated for the frame just processed.
    pub fn accept(&mut self, position: [f64; 2]) {
        self.before_last = self.last;
        self.last = position;
        self.state.observed_positions += 1;
    }
}
