//! Flat `key = value` config files covering the tracker, the synthetic motion
//! and the evaluation protocol.
//!
//! Tracker keys are bare (`buffer_capacity = 16`), the rest are prefixed with
//! `model.`, `synth.` or `eval.`. Pairs are written `a,b`. Lines are applied in
//! order; `#` starts a comment. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::synth::{MotionConfig, Occluder};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub tracker: TrackerConfig,
    pub motion: MotionConfig,
    pub eval: EvalConfig,
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn pair<T: FromStr>(v: &str, sep: char) -> std::result::Result<[T; 2], String> {
    let (a, b) = v
        .split_once(sep)
        .ok_or_else(|| format!("expected two values in {v:?}"))?;
    Ok([scalar(a.trim())?, scalar(b.trim())?])
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| scalar(x.trim())).collect()
}

fn occluder(motion: &mut MotionConfig) -> &mut Occluder {
    if motion.occluder.is_none() {
        *motion = motion.clone().with_default_occluder();
    }
    motion.occluder.as_mut().expect("occluder just set")
}

impl Settings {
    /// Applies one key. Values are parsed but cross-field checks wait for [`Settings::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let t = &mut self.tracker;
        let m = &mut t.model;
        let s = &mut self.motion;
        let e = &mut self.eval;
        match key {
            "buffer_capacity" => t.buffer_capacity = scalar(value)?,
            "refine_passes" => t.refine_passes = scalar(value)?,
            "alpha" => t.alpha = scalar(value)?,
            "init_mode" => t.init_mode = value.parse().map_err(|e: Error| e.to_string())?,
            "visibility_threshold" => t.visibility_threshold = scalar(value)?,
            "window" => t.window = scalar(value)?,
            "stride" => t.stride = scalar(value)?,
            "model.feature_dim" => m.feature_dim = scalar(value)?,
            "model.conv_channels" => m.conv_channels = scalar(value)?,
            "model.corr_dim" => m.corr_dim = scalar(value)?,
            "model.corr_hidden" => m.corr_hidden = scalar(value)?,
            "model.width" => m.width = scalar(value)?,
            "model.heads" => m.heads = scalar(value)?,
            "model.depth" => m.depth = scalar(value)?,
            "model.seed" => m.seed = scalar(value)?,
            "model.backend" => m.backend = value.parse().map_err(|e: Error| e.to_string())?,
            "model.softargmax_temperature" => m.softargmax_temperature = scalar(value)?,
            "model.visibility_pivot" => m.visibility_pivot = scalar(value)?,
            "model.visibility_slope" => m.visibility_slope = scalar(value)?,
            "synth.width" => s.width = scalar(value)?,
            "synth.height" => s.height = scalar(value)?,
            "synth.frames" => s.frames = scalar(value)?,
            "synth.points" => s.points = scalar(value)?,
            "synth.seed" => s.seed = scalar(value)?,
            "synth.velocity" => s.affine.velocity = pair(value, ',')?,
            "synth.oscillation" => s.affine.oscillation = pair(value, ',')?,
            "synth.period" => s.affine.period = scalar(value)?,
            "synth.rotation" => s.affine.rotation = scalar(value)?,
            "synth.scale_rate" => s.affine.scale_rate = scalar(value)?,
            "synth.deform_amplitude" => s.deformation.amplitude = scalar(value)?,
            "synth.deform_wavelength" => s.deformation.wavelength = scalar(value)?,
            "synth.deform_frequency" => s.deformation.frequency = scalar(value)?,
            "synth.occluder" => match value {
                "none" => s.occluder = None,
                "default" => *s = s.clone().with_default_occluder(),
                other => return Err(format!("expected none or default, got {other:?}")),
            },
            "synth.occluder.origin" => occluder(s).origin = pair(value, ',')?,
            "synth.occluder.size" => occluder(s).size = pair(value, ',')?,
            "synth.occluder.velocity" => occluder(s).velocity = pair(value, ',')?,
            "synth.occluder.start_frame" => occluder(s).start_frame = scalar(value)?,
            "eval.delta_thresholds" => e.delta_thresholds = list(value)?,
            "eval.aj_thresholds" => e.aj_thresholds = list(value)?,
            "eval.aj_size" => e.aj_size = pair::<usize>(value, 'x').map(|[w, h]| (w, h))?,
            "eval.delta_size" => {
                e.delta_size = match value {
                    "native" => None,
                    v => Some(pair::<usize>(v, 'x').map(|[w, h]| (w, h))?),
                }
            }
            "eval.visibility_threshold" => e.visibility_threshold = scalar(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected key = value"))?;
            settings
                .set(key.trim(), value.trim())
                .map_err(|msg| Error::parse(path, i + 1, format!("{}: {msg}", key.trim())))?;
        }
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.motion.validate()?;
        self.eval.validate()
    }

    /// Every key with its current value; parsing the output gives back `self`.
    pub fn to_text(&self) -> String {
        let t = &self.tracker;
        let m = &t.model;
        let s = &self.motion;
        let e = &self.eval;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let p2 = |a: [f64; 2]| format!("{},{}", a[0], a[1]);
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        kv("buffer_capacity", t.buffer_capacity.to_string());
        kv("refine_passes", t.refine_passes.to_string());
        kv("alpha", t.alpha.to_string());
        kv("init_mode", t.init_mode.to_string());
        kv("visibility_threshold", t.visibility_threshold.to_string());
        kv("window", t.window.to_string());
        kv("stride", t.stride.to_string());
        kv("model.feature_dim", m.feature_dim.to_string());
        kv("model.conv_channels", m.conv_channels.to_string());
        kv("model.corr_dim", m.corr_dim.to_string());
        kv("model.corr_hidden", m.corr_hidden.to_string());
        kv("model.width", m.width.to_string());
        kv("model.heads", m.heads.to_string());
        kv("model.depth", m.depth.to_string());
        kv("model.seed", m.seed.to_string());
        kv("model.backend", m.backend.to_string());
        kv("model.softargmax_temperature", m.softargmax_temperature.to_string());
        kv("model.visibility_pivot", m.visibility_pivot.to_string());
        kv("model.visibility_slope", m.visibility_slope.to_string());
        kv("synth.width", s.width.to_string());
        kv("synth.height", s.height.to_string());
        kv("synth.frames", s.frames.to_string());
        kv("synth.points", s.points.to_string());
        kv("synth.seed", s.seed.to_string());
        kv("synth.velocity", p2(s.affine.velocity));
        kv("synth.oscillation", p2(s.affine.oscillation));
        kv("synth.period", s.affine.period.to_string());
        kv("synth.rotation", s.affine.rotation.to_string());
        kv("synth.scale_rate", s.affine.scale_rate.to_string());
        kv("synth.deform_amplitude", s.deformation.amplitude.to_string());
        kv("synth.deform_wavelength", s.deformation.wavelength.to_string());
        kv("synth.deform_frequency", s.deformation.frequency.to_string());
        match &s.occluder {
            None => kv("synth.occluder", "none".into()),
            Some(o) => {
                kv("synth.occluder.origin", p2(o.origin));
                kv("synth.occluder.size", p2(o.size));
                kv("synth.occluder.velocity", p2(o.velocity));
                kv("synth.occluder.start_frame", o.start_frame.to_string());
            }
        }
        kv("eval.delta_thresholds", join(&e.delta_thresholds));
        kv("eval.aj_thresholds", join(&e.aj_thresholds));
        kv("eval.aj_size", format!("{}x{}", e.aj_size.0, e.aj_size.1));
        kv(
            "eval.delta_size",
            e.delta_size.map_or("native".into(), |(w, h)| format!("{w}x{h}")),
        );
        kv("eval.visibility_threshold", e.visibility_threshold.to_string());
        out
    }
}
