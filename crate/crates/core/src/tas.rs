//! Temporal-augmented assembling: frame reversal, the temporal-consistency
//! score, and averaging of the forward and reversed spatial maps.
//!
//! Maps from a reversed run are indexed by presentation order; they must be
//! re-aligned with [`reverse_frames`] before any cell-wise comparison.

use ndarray::{Array, Array3, Axis, Dimension, Slice};
use serde::{Deserialize, Serialize};

use crate::backend::LatentPrompt;
use crate::domain::{FrameDims, GroundTruthTube, GroundingAttentionMap, TrackProposal};
use crate::error::{Result, StvgError};
use crate::gti::grounding_hit;
use crate::grounding::track_masks;
use crate::scalar::Scalar;

/// Reverse the first (frame) axis.
pub fn reverse_frames<A: Clone, D: Dimension>(a: &Array<A, D>) -> Array<A, D> {
    a.slice_axis(Axis(0), Slice::new(0, None, -1)).to_owned()
}

pub fn reverse_map<T: Scalar>(map: &GroundingAttentionMap<T>) -> GroundingAttentionMap<T> {
    GroundingAttentionMap::new(reverse_frames(&map.values), map.token_index)
}

/// Reverse a latent whose rows are `frame_count` equal frame blocks.
pub fn reverse_latent<T: Scalar>(latent: &LatentPrompt<T>, frame_count: usize) -> Result<LatentPrompt<T>> {
    let (rows, dim) = latent.shape();
    if frame_count == 0 || rows % frame_count != 0 {
        return Err(StvgError::Shape(format!("{rows} latent rows over {frame_count} frames")));
    }
    let blocks = latent
        .values
        .to_shape((frame_count, rows / frame_count, dim))
        .map_err(|e| StvgError::Shape(e.to_string()))?
        .to_owned();
    let flipped = reverse_frames(&blocks);
    let values = flipped
        .to_shape((rows, dim))
        .map_err(|e| StvgError::Shape(e.to_string()))?
        .to_owned();
    Ok(LatentPrompt { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyScore<T> {
    pub value: T,
    pub per_proposal: Vec<T>,
}

/// Max over proposals of the max over cells of `(a . mask) * (aligned . mask)`.
pub fn consistency_score<T: Scalar>(
    a: &GroundingAttentionMap<T>,
    aligned_rev: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    dims: FrameDims,
) -> Result<ConsistencyScore<T>> {
    if proposals.is_empty() {
        return Err(StvgError::NoProposals);
    }
    if a.grid() != aligned_rev.grid() {
        return Err(StvgError::Shape(format!("{:?} vs {:?}", a.grid(), aligned_rev.grid())));
    }
    let per_proposal: Vec<T> = track_masks(a, proposals, dims)?
        .iter()
        .map(|mask| {
            a.values
                .iter()
                .zip(aligned_rev.values.iter())
                .zip(mask.values.iter())
                .filter(|(_, m)| **m)
                .map(|((x, y), _)| *x * *y)
                .fold(T::zero(), T::max)
        })
        .collect();
    let value = per_proposal.iter().copied().fold(T::zero(), T::max);
    Ok(ConsistencyScore { value, per_proposal })
}

/// Mean of the forward map and the re-aligned map from the reversed run.
pub fn assemble_spatial<T: Scalar>(
    a: &GroundingAttentionMap<T>,
    a_rev: &GroundingAttentionMap<T>,
) -> Result<GroundingAttentionMap<T>> {
    if a.grid() != a_rev.grid() {
        return Err(StvgError::Shape(format!("{:?} vs {:?}", a.grid(), a_rev.grid())));
    }
    let two = T::one() + T::one();
    let aligned: Array3<T> = reverse_frames(&a_rev.values);
    Ok(GroundingAttentionMap::new(
        (&a.values + &aligned).mapv(|v| v / two),
        a.token_index,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencySample {
    pub consistency: f64,
    /// 1.0 for a grounding hit, 0.0 otherwise (or any accuracy in [0, 1]).
    pub accuracy: f64,
}

/// Consistency of one sample and whether its forward spatial map grounds it.
pub fn consistency_sample<T: Scalar>(
    a: &GroundingAttentionMap<T>,
    aligned_rev: &GroundingAttentionMap<T>,
    proposals: &[TrackProposal<T>],
    gt: &GroundTruthTube<T>,
    dims: FrameDims,
) -> Result<ConsistencySample> {
    let c = consistency_score(a, aligned_rev, proposals, dims)?;
    let hit = grounding_hit(a, proposals, gt, dims)?;
    Ok(ConsistencySample {
        consistency: c.value.as_f64(),
        accuracy: if hit { 1.0 } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group_index: usize,
    pub mean_consistency: f64,
    pub mean_accuracy: f64,
    pub n_samples: usize,
}

pub const STUDY_GROUPS: usize = 10;

/// Sizes of `STUDY_GROUPS` near-equal groups, remainder spread from the front.
pub fn group_sizes(n: usize) -> Vec<usize> {
    let (base, rem) = (n / STUDY_GROUPS, n % STUDY_GROUPS);
    (0..STUDY_GROUPS).map(|g| base + usize::from(g < rem)).collect()
}

/// Mean accuracy per group after sorting by consistency, highest first.
pub fn consistency_accuracy_study(samples: &[ConsistencySample]) -> Result<Vec<GroupRow>> {
    if samples.len() < STUDY_GROUPS {
        return Err(StvgError::InsufficientSamples {
            got: samples.len(),
            needed: STUDY_GROUPS,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.consistency.total_cmp(&a.consistency));
    let mut rows = Vec::with_capacity(STUDY_GROUPS);
    let mut start = 0;
    for (g, size) in group_sizes(samples.len()).into_iter().enumerate() {
        let chunk = &sorted[start..start + size];
        start += size;
        let n = size as f64;
        rows.push(GroupRow {
            group_index: g,
            mean_consistency: chunk.iter().map(|s| s.consistency).sum::<f64>() / n,
            mean_accuracy: chunk.iter().map(|s| s.accuracy).sum::<f64>() / n,
            n_samples: size,
        });
    }
    Ok(rows)
}
