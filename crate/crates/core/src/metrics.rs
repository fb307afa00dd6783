//! Tracking accuracy metrics: position accuracy averaged over pixel thresholds,
//! Average Jaccard and occlusion accuracy.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::synth::GroundTruth;

/// One point observation, either predicted or ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub t: u64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// A ground-truth record and the prediction for the same `(id, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub gt: PointRecord,
    pub pred: PointRecord,
}

impl Pair {
    pub fn error(&self) -> f64 {
        (self.pred.x - self.gt.x).hypot(self.pred.y - self.gt.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub delta_thresholds: Vec<f64>,
    pub aj_thresholds: Vec<f64>,
    /// Resolution at which Average Jaccard is computed.
    pub aj_size: (usize, usize),
    /// Resolution for the delta metric; `None` keeps the inference resolution.
    pub delta_size: Option<(usize, usize)>,
    pub visibility_threshold: f32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delta_thresholds: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            aj_thresholds: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            aj_size: (256, 256),
            delta_size: None,
            visibility_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("delta", &self.delta_thresholds), ("aj", &self.aj_thresholds)] {
            check_thresholds(list).map_err(|msg| Error::InvalidConfig(format!("{name} thresholds: {msg}")))?;
        }
        let sizes = std::iter::once(self.aj_size).chain(self.delta_size);
        if sizes.into_iter().any(|(w, h)| w == 0 || h == 0) {
            return Err(Error::InvalidConfig("evaluation sizes must be positive".into()));
        }
        if !(self.visibility_threshold > 0.0 && self.visibility_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "visibility threshold {} outside (0, 1)",
                self.visibility_threshold
            )));
        }
        Ok(())
    }
}

fn check_thresholds(list: &[f64]) -> std::result::Result<(), String> {
    if list.is_empty() {
        return Err("empty".into());
    }
    if list.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err("must be positive".into());
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err("must be strictly increasing".into());
    }
    Ok(())
}

/// Scales coordinates from a `from` resolution to a `to` resolution.
pub fn rescale_tracks(records: &[PointRecord], from: (usize, usize), to: (usize, usize)) -> Result<Vec<PointRecord>> {
    if from.0 == 0 || from.1 == 0 || to.0 == 0 || to.1 == 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot rescale {}x{} -> {}x{}",
            from.0, from.1, to.0, to.1
        )));
    }
    let sx = to.0 as f64 / from.0 as f64;
    let sy = to.1 as f64 / from.1 as f64;
    Ok(records
        .iter()
        .map(|r| PointRecord {
            x: r.x * sx,
            y: r.y * sy,
            ..*r
        })
        .collect())
}

fn rescale_pairs(pairs: &[Pair], from: (usize, usize), to: (usize, usize)) -> Result<Vec<Pair>> {
    let gts: Vec<PointRecord> = pairs.iter().map(|p| p.gt).collect();
    let preds: Vec<PointRecord> = pairs.iter().map(|p| p.pred).collect();
    let gts = rescale_tracks(&gts, from, to)?;
    let preds = rescale_tracks(&preds, from, to)?;
    Ok(gts.into_iter().zip(preds).map(|(gt, pred)| Pair { gt, pred }).collect())
}

/// Matches every ground-truth record with the prediction for the same
/// `(id, t)`. Predictions without ground truth are ignored (sparse
/// annotation); ground truth without a prediction is an error.
pub fn align(preds: &[PointRecord], gts: &[PointRecord]) -> Result<Vec<Pair>> {
    let index: HashMap<(usize, u64), &PointRecord> = preds.iter().map(|p| ((p.id, p.t), p)).collect();
    let mut pairs = Vec::with_capacity(gts.len());
    let mut missing = 0;
    for gt in gts {
        match index.get(&(gt.id, gt.t)) {
            Some(pred) => pairs.push(Pair { gt: *gt, pred: **pred }),
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(Error::Misaligned { missing });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    Ok(pairs)
}

/// Mean over thresholds plus the per-threshold values.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScore {
    pub thresholds: Vec<f64>,
    pub per_threshold: Vec<f64>,
    pub average: f64,
}

impl ThresholdScore {
    fn new(thresholds: &[f64], per_threshold: Vec<f64>) -> Self {
        let average = per_threshold.iter().sum::<f64>() / per_threshold.len() as f64;
        Self {
            thresholds: thresholds.to_vec(),
            per_threshold,
            average,
        }
    }
}

/// Fraction of ground-truth-visible pairs with error `<= threshold`, averaged
/// over thresholds.
pub fn delta_avg(pairs: &[Pair], thresholds: &[f64]) -> Result<ThresholdScore> {
    check_thresholds(thresholds).map_err(Error::InvalidConfig)?;
    let errors: Vec<f64> = pairs.iter().filter(|p| p.gt.visible).map(Pair::error).collect();
    if errors.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let per = thresholds
        .iter()
        .map(|&tau| errors.iter().filter(|&&e| e <= tau).count() as f64 / errors.len() as f64)
        .collect();
    Ok(ThresholdScore::new(thresholds, per))
}

/// Mean of per-sequence delta averages.
pub fn delta_avg_per_sequence(sequences: &[Vec<Pair>], thresholds: &[f64]) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let mut total = 0.0;
    for seq in sequences {
        total += delta_avg(seq, thresholds)?.average;
    }
    Ok(total / sequences.len() as f64)
}

/// Jaccard `TP / (TP + FP + FN)` per threshold, averaged. A threshold with no
/// positives of any kind (everything occluded and predicted occluded) scores 1.
pub fn average_jaccard(pairs: &[Pair], thresholds: &[f64]) -> Result<ThresholdScore> {
    check_thresholds(thresholds).map_err(Error::InvalidConfig)?;
    if pairs.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let per = thresholds
        .iter()
        .map(|&tau| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for p in pairs {
                let close = p.error() <= tau;
                match (p.gt.visible, p.pred.visible) {
                    (true, true) if close => tp += 1,
                    (true, true) => {
                        fp += 1;
                        fn_ += 1;
                    }
                    (true, false) => fn_ += 1,
                    (false, true) => fp += 1,
                    (false, false) => {}
                }
            }
            let denom = tp + fp + fn_;
            if denom == 0 {
                1.0
            } else {
                tp as f64 / denom as f64
            }
        })
        .collect();
    Ok(ThresholdScore::new(thresholds, per))
}

pub fn occlusion_accuracy(pred_visible: &[bool], gt_visible: &[bool]) -> Result<f64> {
    if pred_visible.len() != gt_visible.len() {
        return Err(Error::DimensionMismatch {
            what: "visibility sequences",
            expected: gt_visible.len(),
            actual: pred_visible.len(),
        });
    }
    if gt_visible.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let same = pred_visible.iter().zip(gt_visible).filter(|(p, g)| p == g).count();
    Ok(same as f64 / gt_visible.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub delta: ThresholdScore,
    pub average_jaccard: ThresholdScore,
    pub occlusion_accuracy: f64,
    pub pairs: usize,
}

/// Full evaluation of aligned records given at `infer_size`. Delta is measured
/// at `config.delta_size` (or `infer_size`), Average Jaccard at `config.aj_size`.
pub fn evaluate(
    preds: &[PointRecord],
    gts: &[PointRecord],
    infer_size: (usize, usize),
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let pairs = align(preds, gts)?;
    let delta_pairs = rescale_pairs(&pairs, infer_size, config.delta_size.unwrap_or(infer_size))?;
    let aj_pairs = rescale_pairs(&pairs, infer_size, config.aj_size)?;
    let pred_vis: Vec<bool> = pairs.iter().map(|p| p.pred.visible).collect();
    let gt_vis: Vec<bool> = pairs.iter().map(|p| p.gt.visible).collect();
    Ok(EvalReport {
        delta: delta_avg(&delta_pairs, &config.delta_thresholds)?,
        average_jaccard: average_jaccard(&aj_pairs, &config.aj_thresholds)?,
        occlusion_accuracy: occlusion_accuracy(&pred_vis, &gt_vis)?,
        pairs: pairs.len(),
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs {}", self.pairs)?;
        writeln!(f, "delta_avg {:.6}", self.delta.average)?;
        for (t, v) in self.delta.thresholds.iter().zip(&self.delta.per_threshold) {
            writeln!(f, "delta@{t} {v:.6}")?;
        }
        writeln!(f, "average_jaccard {:.6}", self.average_jaccard.average)?;
        for (t, v) in self
            .average_jaccard
            .thresholds
            .iter()
            .zip(&self.average_jaccard.per_threshold)
        {
            writeln!(f, "jaccard@{t} {v:.6}")?;
        }
        writeln!(f, "occlusion_accuracy {:.6}", self.occlusion_accuracy)
    }
}

pub fn ground_truth_records(gt: &GroundTruth) -> Vec<PointRecord> {
    gt.tracks
        .iter()
        .enumerate()
        .flat_map(|(t, frame)| {
            frame.iter().enumerate().map(move |(id, g)| PointRecord {
                t: t as u64,
                id,
                x: g.x,
                y: g.y,
                visible: g.visible,
            })
        })
        .collect()
}
