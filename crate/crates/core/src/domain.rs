//! Domain types shared by every stage of the pipeline.
//!
//! Time is always the *sampled* frame axis (`0..frame_count`); source frame
//! numbers only appear in [`VideoClip::frame_indices`] and at serialization.

use std::ops::Range;

use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::dsth::LraConfig;
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

/// Presentation order of the sampled frames to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOrder {
    #[default]
    Forward,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoClip {
    pub clip_id: String,
    pub frame_count: usize,
    /// Source frame number of every sampled frame, strictly increasing.
    pub frame_indices: Vec<usize>,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default)]
    pub order: FrameOrder,
}

impl VideoClip {
    pub fn new(
        clip_id: impl Into<String>,
        frame_indices: Vec<usize>,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self> {
        let clip = Self {
            clip_id: clip_id.into(),
            frame_count: frame_indices.len(),
            frame_indices,
            width_px,
            height_px,
            order: FrameOrder::Forward,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 || self.frame_count != self.frame_indices.len() {
            return Err(StvgError::Invalid(format!(
                "clip {}: frame_count {} with {} frame indices",
                self.clip_id,
                self.frame_count,
                self.frame_indices.len()
            )));
        }
        if self.frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(StvgError::Invalid(format!(
                "clip {}: frame indices not strictly increasing",
                self.clip_id
            )));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(StvgError::Invalid(format!("clip {}: zero frame size", self.clip_id)));
        }
        Ok(())
    }

    pub fn dims(&self) -> FrameDims {
        FrameDims {
            width: self.width_px,
            height: self.height_px,
        }
    }

    /// Same clip with the frame order flipped.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.order = match self.order {
            FrameOrder::Forward => FrameOrder::Reversed,
            FrameOrder::Reversed => FrameOrder::Forward,
        };
        out
    }

    /// Sampled frame (original order) shown at presentation position `pos`.
    pub fn sampled_at(&self, pos: usize) -> usize {
        match self.order {
            FrameOrder::Forward => pos,
            FrameOrder::Reversed => self.frame_count - 1 - pos,
        }
    }

    /// Source frame number shown at presentation position `pos`.
    pub fn source_at(&self, pos: usize) -> usize {
        self.frame_indices[self.sampled_at(pos)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameDims {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub gt_tube: Option<Tube<f64>>,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(StvgError::Invalid("query text is empty".into()));
        }
        Ok(Self {
            query_id: query_id.into(),
            text,
            gt_tube: None,
        })
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(StvgError::Invalid(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn from_corners(c: [T; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn corners(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn area(&self) -> T {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn center(&self) -> (T, T) {
        let two = T::one() + T::one();
        ((self.x_min + self.x_max) / two, (self.y_min + self.y_max) / two)
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    /// Clip to `[0, width] x [0, height]`; `None` when nothing is left.
    pub fn clipped(&self, dims: FrameDims) -> Option<Self> {
        let w = T::of(dims.width as f64);
        let h = T::of(dims.height as f64);
        let b = Self {
            x_min: self.x_min.max(T::zero()),
            y_min: self.y_min.max(T::zero()),
            x_max: self.x_max.min(w),
            y_max: self.y_max.min(h),
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        BoundingBox {
            x_min: U::of(self.x_min.as_f64()),
            y_min: U::of(self.y_min.as_f64()),
            x_max: U::of(self.x_max.as_f64()),
            y_max: U::of(self.y_max.as_f64()),
        }
    }
}

/// A contiguous per-frame box sequence on the sampled axis.
///
/// Used both for ground truth and for predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube<T> {
    pub t_s: usize,
    pub t_e: usize,
    pub boxes: Vec<BoundingBox<T>>,
}

pub type GroundTruthTube<T> = Tube<T>;
pub type GroundedTube<T> = Tube<T>;

impl<T: Scalar> Tube<T> {
    pub fn new(t_s: usize, boxes: Vec<BoundingBox<T>>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(StvgError::Invalid("tube without boxes".into()));
        }
        for b in &boxes {
            b.validate()?;
        }
        Ok(Self {
            t_s,
            t_e: t_s + boxes.len() - 1,
            boxes,
        })
    }

    pub fn len(&self) -> usize {
        self.t_e - self.t_s + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn box_at(&self, t: usize) -> Option<&BoundingBox<T>> {
        (self.t_s..=self.t_e)
            .contains(&t)
            .then(|| &self.boxes[t - self.t_s])
    }

    pub fn frames(&self) -> Range<usize> {
        self.t_s..self.t_e + 1
    }

    pub fn validate(&self, frame_count: usize, dims: FrameDims) -> Result<()> {
        if self.t_s > self.t_e || self.t_e >= frame_count {
            return Err(StvgError::Invalid(format!(
                "tube span {}..={} outside {} frames",
                self.t_s, self.t_e, frame_count
            )));
        }
        if self.boxes.len() != self.len() {
            return Err(StvgError::Invalid("tube box count does not match span".into()));
        }
        let (w, h) = (T::of(dims.width as f64), T::of(dims.height as f64));
        for b in &self.boxes {
            b.validate()?;
            if b.x_min < T::zero() || b.y_min < T::zero() || b.x_max > w || b.y_max > h {
                return Err(StvgError::BoxOutOfBounds(format!("{b:?} in {w}x{h} frame")));
            }
        }
        Ok(())
    }

    /// Per-frame optional boxes over `frame_count` frames.
    pub fn to_frame_boxes(&self, frame_count: usize) -> Vec<Option<BoundingBox<T>>> {
        (0..frame_count).map(|t| self.box_at(t).copied()).collect()
    }
}

/// One candidate object tube from an external detector/tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackProposal<T> {
    pub track_id: String,
    /// One slot per sampled frame; `None` where the object is not visible.
    pub boxes: Vec<Option<BoundingBox<T>>>,
}

impl<T: Scalar> TrackProposal<T> {
    pub fn new(track_id: impl Into<String>, boxes: Vec<Option<BoundingBox<T>>>) -> Result<Self> {
        let track_id = track_id.into();
        if boxes.iter().all(Option::is_none) {
            return Err(StvgError::Invalid(format!("track {track_id} has no boxes")));
        }
        for b in boxes.iter().flatten() {
            b.validate()?;
        }
        Ok(Self { track_id, boxes })
    }

    pub fn visible_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.boxes
            .iter()
            .enumerate()
            .filter_map(|(t, b)| b.map(|_| t))
    }
}

/// Layout of the model input: `system | visual | query | special`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    pub n_sys: usize,
    pub m_visual: usize,
    pub n_query: usize,
    pub n_role: usize,
    /// `(frames, h, w)` of the visual grid.
    pub grid: (usize, usize, usize),
}

impl TokenLayout {
    pub fn new(
        n_sys: usize,
        n_query: usize,
        n_role: usize,
        grid: (usize, usize, usize),
    ) -> Result<Self> {
        let layout = Self {
            n_sys,
            m_visual: grid.0 * grid.1 * grid.2,
            n_query,
            n_role,
            grid,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, h, w) = self.grid;
        if self.n_role == 0 {
            return Err(StvgError::Invalid("layout needs at least one special token".into()));
        }
        if t * h * w != self.m_visual || self.m_visual == 0 {
            return Err(StvgError::Invalid(format!(
                "grid {:?} does not cover {} visual tokens",
                self.grid, self.m_visual
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_sys + self.m_visual + self.n_query + self.n_role
    }

    pub fn visual_range(&self) -> Range<usize> {
        self.n_sys..self.n_sys + self.m_visual
    }

    pub fn query_range(&self) -> Range<usize> {
        let s = self.n_sys + self.m_visual;
        s..s + self.n_query
    }

    pub fn role_range(&self) -> Range<usize> {
        let s = self.n_sys + self.m_visual + self.n_query;
        s..s + self.n_role
    }
}

/// Post-softmax attention, shape `(layers, heads, N, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAttention<T> {
    pub values: Array4<T>,
}

impl<T: Scalar> RawAttention<T> {
    pub fn new(values: Array4<T>) -> Result<Self> {
        let (_, _, n, m) = values.dim();
        if n != m {
            return Err(StvgError::Shape(format!("attention rows {n} != columns {m}")));
        }
        Ok(Self { values })
    }

    pub fn n_tokens(&self) -> usize {
        self.values.dim().2
    }

    /// Checks non-negativity and unit row sums.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.values.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(StvgError::Invalid("attention has negative or non-finite values".into()));
        }
        for row in self.values.lanes(Axis(3)) {
            let s: f64 = row.iter().map(|v| v.as_f64()).sum();
            if (s - 1.0).abs() > tol {
                return Err(StvgError::Invalid(format!("attention row sums to {s}")));
            }
        }
        Ok(())
    }
}

/// One token's attention over the visual grid, shape `(frames, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingAttentionMap<T> {
    pub values: Array3<T>,
    pub token_index: usize,
}

impl<T: Scalar> GroundingAttentionMap<T> {
    pub fn new(values: Array3<T>, token_index: usize) -> Self {
        Self {
            values,
            token_index,
        }
    }

    pub fn grid(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    /// Global maximum, the token's visual activation.
    pub fn max_value(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.mapv(f),
            token_index: self.token_index,
        }
    }
}

/// Binary mask over the visual grid, shape `(frames, h, w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMask {
    pub values: Array3<bool>,
}

impl GridMask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_frames_sampled: usize,
    pub top_k_frames: usize,
    pub lra: LraConfig,
    pub epsilon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_frames_sampled: 20,
            top_k_frames: 7,
            lra: LraConfig::default(),
            epsilon: 1e-12,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k_frames == 0 || self.top_k_frames > self.n_frames_sampled {
            return Err(StvgError::Invalid(format!(
                "top_k_frames {} must lie in 1..={}",
                self.top_k_frames, self.n_frames_sampled
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(StvgError::Invalid("epsilon must be positive".into()));
        }
        self.lra.validate()
    }
}
