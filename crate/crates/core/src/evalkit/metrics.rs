use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, GroundTruthTube, GroundedTube, TrackProposal};
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

/// Intersection over union; 0 for disjoint boxes.
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = a.intersection_area(b);
    if inter <= T::zero() {
        return T::zero();
    }
    inter / (a.area() + b.area() - inter)
}

/// Sum of per-frame IoU over frames in both spans, divided by the number of
/// frames in either span.
pub fn viou<T: Scalar>(pred: &GroundedTube<T>, gt: &GroundTruthTube<T>) -> T {
    let lo = pred.t_s.max(gt.t_s);
    let hi = pred.t_e.min(gt.t_e);
    if lo > hi {
        return T::zero();
    }
    let inter_frames = hi - lo + 1;
    let union_frames = pred.len() + gt.len() - inter_frames;
    let total = (lo..=hi)
        .map(|t| iou(pred.box_at(t).expect("in span"), gt.box_at(t).expect("in span")))
        .fold(T::zero(), |a, b| a + b);
    total / T::of(union_frames as f64)
}

/// Mean IoU of a track against the ground truth over the ground-truth frames;
/// frames where the track is absent count as 0.
pub fn track_iou<T: Scalar>(proposal: &TrackProposal<T>, gt: &GroundTruthTube<T>) -> f64 {
    let total: f64 = gt
        .frames()
        .map(|t| match (proposal.boxes.get(t).copied().flatten(), gt.box_at(t)) {
            (Some(p), Some(g)) => iou(&p, g).as_f64(),
            _ => 0.0,
        })
        .sum();
    total / gt.len() as f64
}

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.3, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub m_viou: f64,
    /// `(threshold, fraction of samples with vIoU strictly greater)`.
    pub viou_at: Vec<(f64, f64)>,
    pub per_sample: Vec<(String, f64)>,
}

impl EvalSummary {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.viou_at.iter().find(|(t, _)| *t == threshold).map(|(_, v)| *v)
    }
}

pub fn summarize(per_sample: &[(String, f64)], thresholds: &[f64]) -> Result<EvalSummary> {
    if per_sample.is_empty() {
        return Err(StvgError::NoSamples);
    }
    let n = per_sample.len() as f64;
    let m_viou = per_sample.iter().map(|(_, v)| *v).sum::<f64>() / n;
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let viou_at = sorted
        .into_iter()
        .map(|t| {
            let hits = per_sample.iter().filter(|(_, v)| *v > t).count();
            (t, hits as f64 / n)
        })
        .collect();
    Ok(EvalSummary {
        m_viou,
        viou_at,
        per_sample: per_sample.to_vec(),
    })
}
