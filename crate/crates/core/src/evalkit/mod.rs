//! Metrics, dataset ingestion and result persistence.

pub mod manifest;
pub mod metrics;
pub mod results;

pub use manifest::{
    load_manifest, load_proposals, resample_gt, resample_tracks, save_manifest, save_proposals, DatasetManifest,
    GtRecord, ManifestEntry, SourceTrack,
};
pub use metrics::{iou, summarize, track_iou, viou, EvalSummary, DEFAULT_THRESHOLDS};
pub use results::{
    load_results, metrics_csv, save_results, to_fixed_json, BranchRecord, DecompositionRecord, LraRecord, Prediction,
    ResultsHeader, RunResults, SampleResult, TubeRecord,
};
