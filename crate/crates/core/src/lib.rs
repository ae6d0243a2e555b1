//! Zero-shot spatio-temporal video grounding on top of a multimodal language
//! model's attention.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for callers that do not care.

pub mod backend;
pub mod domain;
pub mod dsth;
pub mod error;
pub mod evalkit;
pub mod frames;
pub mod grounding;
pub mod gti;
pub mod raster;
pub mod scalar;
pub mod tas;

pub use domain::{
    FrameDims, FrameOrder, GridMask, PipelineConfig, QueryRecord, TokenLayout, VideoClip,
};
pub use error::{Result, StvgError};
pub use scalar::Scalar;

pub type BoundingBoxF64 = domain::BoundingBox<f64>;
pub type BoundingBoxF32 = domain::BoundingBox<f32>;
pub type TubeF64 = domain::Tube<f64>;
pub type TubeF32 = domain::Tube<f32>;
pub type TrackProposalF64 = domain::TrackProposal<f64>;
pub type TrackProposalF32 = domain::TrackProposal<f32>;
pub type RawAttentionF64 = domain::RawAttention<f64>;
pub type RawAttentionF32 = domain::RawAttention<f32>;
pub type AttentionMapF64 = domain::GroundingAttentionMap<f64>;
pub type AttentionMapF32 = domain::GroundingAttentionMap<f32>;
pub type LatentPromptF64 = backend::LatentPrompt<f64>;
pub type LatentPromptF32 = backend::LatentPrompt<f32>;
pub type ToyBackendF64 = backend::ToyBackend<f64>;
pub type ToyBackendF32 = backend::ToyBackend<f32>;
