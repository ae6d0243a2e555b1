//! Grounding-token identification.
//!
//! Per special token, the text-to-visual attention averaged over layers and
//! heads gives one map over the visual grid. Without ground truth, the token
//! with the largest visual activation (global map maximum) is selected. With
//! ground truth, the attention ratio ranks tokens, which drives the hit-ratio
//! and activation-rank studies.

use std::cmp::Ordering;

use ndarray::{s, Array3};
use serde::{Deserialize, Serialize};

use crate::domain::{FrameDims, GridMask, GroundTruthTube, GroundingAttentionMap, RawAttention, TokenLayout, TrackProposal};
use crate::error::{Result, StvgError};
use crate::evalkit::track_iou;
use crate::grounding::{masked_max, select_track, track_score};
use crate::raster::rasterize_frames;
use crate::scalar::{argmax, Scalar};

/// Aggregated maps of every special token, in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialTokenAttention<T> {
    pub maps: Vec<GroundingAttentionMap<T>>,
    pub token_labels: Vec<String>,
}

impl<T: Scalar> SpecialTokenAttention<T> {
    pub fn new(maps: Vec<GroundingAttentionMap<T>>) -> Result<Self> {
        if let Some(first) = maps.first() {
            if maps.iter().any(|m| m.grid() != first.grid()) {
                return Err(StvgError::Shape("special-token maps differ in grid".into()));
            }
        }
        let token_labels = (0..maps.len()).map(|i| format!("special_{i}")).collect();
        Ok(Self { maps, token_labels })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Token indices ordered by visual activation, highest first, lowest index on ties.
    pub fn activation_ranking(&self) -> Vec<usize> {
        let act: Vec<T> = self.maps.iter().map(GroundingAttentionMap::max_value).collect();
        let mut order: Vec<usize> = (0..act.len()).collect();
        order.sort_by(|a, b| act[*b].partial_cmp(&act[*a]).unwrap_or(Ordering::Equal));
        order
    }
}

/// Mean over layers and heads of each special-token row, restricted to the
/// visual columns and reshaped to `(frames, h, w)`.
pub fn aggregate_attention<T: Scalar>(
    raw: &RawAttention<T>,
    layout: &TokenLayout,
) -> Result<SpecialTokenAttention<T>> {
    let (n_layers, n_heads, n, _) = raw.values.dim();
    if n != layout.total() {
        return Err(StvgError::Shape(format!(
            "attention over {n} tokens, layout declares {}",
            layout.total()
        )));
    }
    let count = T::of((n_layers * n_heads) as f64);
    let vis = layout.visual_range();
    let mut maps = Vec::with_capacity(layout.n_role);
    for (k, row) in layout.role_range().enumerate() {
        let mut acc = ndarray::Array1::<T>::zeros(layout.m_visual);
        for l in 0..n_layers {
            for h in 0..n_heads {
                acc += &raw.values.slice(s![l, h, row, vis.clone()]);
            }
        }
        let values = Array3::from_shape_vec(layout.grid, (acc / count).to_vec())
            .map_err(|e| StvgError::Shape(e.to_string()))?;
        maps.push(GroundingAttentionMap::new(values, k));
    }
    SpecialTokenAttention::new(maps)
}

/// Max attention inside `mask` over max attention outside it, all frames jointly.
pub fn attention_ratio_masked<T: Scalar>(map: &GroundingAttentionMap<T>, mask: &GridMask, epsilon: f64) -> T {
    let outside = GridMask {
        values: mask.values.mapv(|m| !m),
    };
    let inside = masked_max(map, mask).unwrap_or_else(T::zero);
    let rest = masked_max(map, &outside).unwrap_or_else(T::zero);
    inside / rest.max(T::of(epsilon))
}

pub fn attention_ratio<T: Scalar>(
    map: &GroundingAttentionMap<T>,
    gt: &GroundTruthTube<T>,
    dims: FrameDims,
    epsilon: f64,
) -> Result<T> {
    let mask = rasterize_frames(&gt.to_frame_boxes(map.grid().0), dims, map.grid())?;
    Ok(attention_ratio_masked(map, &mask, epsilon))
}

/// Token with the highest attention ratio against the ground truth.
pub fn superior_token<T: Scalar>(
    sta: &SpecialTokenAttention<T>,
    gt: &GroundTruthTube<T>,
    dims: FrameDims,
    epsilon: f64,
) -> Result<usize> {
    let ratios = sta
        .maps
        .iter()
        .map(|m| attention_ratio(m, gt, dims, epsilon))
        .collect::<Result<Vec<_>>>()?;
    argmax(ratios).ok_or(StvgError::NoSamples)
}

/// Token with the highest visual activation, and its map.
pub fn select_grounding_token<T: Scalar>(
    sta: &SpecialTokenAttention<T>,
) -> Result<(usize, GroundingAttentionMap<T>)> {
    let idx = argmax(sta.maps.iter().map(GroundingAttentionMap::max_value))
        .ok_or_else(|| StvgError::Invalid("no special tokens".into()))?;
    Ok((idx, sta.maps[idx].clone()))
}

/// Element-wise mean of every special token's map, the selection-free
/// baseline. Its `token_index` is `sta.len()`, one past the last token.
pub fn average_special_tokens<T: Scalar>(sta: &SpecialTokenAttention<T>) -> Result<GroundingAttentionMap<T>> {
    let first = sta
        .maps
        .first()
        .ok_or_else(|| StvgError::Invalid("no special tokens".into()))?;
    let mut sum = first.values.clone();
    for m in &sta.maps[1..] {
        sum += &m.values;
    }
    let n = T::of(sta.len() as f64);
    Ok(GroundingAttentionMap::new(sum.mapv(|v| v / n), sta.len()))
}

/// One probe sample for the pilot studies.
#[derive(Debug, Clone)]
pub struct GtiSample<T> {
    pub attention: SpecialTokenAttention<T>,
    pub gt: GroundTruthTube<T>,
    pub proposals: Vec<TrackProposal<T>>,
    pub dims: FrameDims,
}

/// Frequency with which each token index is the superior token.
pub fn hit_ratio_study<T: Scalar>(samples: &[GtiSample<T>], epsilon: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(StvgError::NoSamples);
    }
    let width = samples.iter().map(|s| s.attention.len()).max().unwrap_or(0);
    let mut counts = vec![0usize; width];
    for s in samples {
        counts[superior_token(&s.attention, &s.gt, s.dims, epsilon)?] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / samples.len() as f64)
        .collect())
}

/// Whether the proposal picked by `map` overlaps the ground truth at IoU >= 0.5.
pub fn grounding_hit<T: Scalar>(
    map: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    gt: &GroundTruthTube<T>,
    dims: FrameDims,
) -> Result<bool> {
    let best = select_track(&track_score(map, proposals, dims)?)?;
    Ok(track_iou(&proposals[best], gt) >= 0.5)
}

/// Acc@0.5 of the rank-r token (by visual activation) for every rank r.
pub fn rank_accuracy_study<T: Scalar>(samples: &[GtiSample<T>]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(StvgError::NoSamples);
    }
    let width = samples.iter().map(|s| s.attention.len()).max().unwrap_or(0);
    let mut hits = vec![0usize; width];
    let mut seen = vec![0usize; width];
    for s in samples {
        for (rank, tok) in s.attention.activation_ranking().into_iter().enumerate() {
            seen[rank] += 1;
            if grounding_hit(&s.attention.maps[tok], &s.proposals, &s.gt, s.dims)? {
                hits[rank] += 1;
            }
        }
    }
    Ok(hits
        .iter()
        .zip(&seen)
        .map(|(h, n)| if *n == 0 { 0.0 } else { *h as f64 / *n as f64 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtiReport {
    pub hit_ratio: Vec<(String, f64)>,
    pub rank_accuracy: Vec<f64>,
}
