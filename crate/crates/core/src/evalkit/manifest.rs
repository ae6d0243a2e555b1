//! Dataset manifest and proposal ingestion.
//!
//! Manifest and proposal files index frames by *source* frame number. The
//! loaders validate them; [`ManifestEntry::clip`], [`resample_gt`] and
//! [`resample_tracks`] move everything onto the sampled axis.
//!
//! ```json
//! {"entries": [{"clip_id": "c1", "query_id": "q1", "frames": 120,
//!               "width": 640, "height": 360, "query": "a man walks to the door",
//!               "gt": {"t_s": 10, "t_e": 12, "boxes": [[x1, y1, x2, y2], ...]},
//!               "proposals": "proposals/c1.json"}]}
//! ```
//!
//! Proposals: `{"tracks": [{"id": "t0", "boxes": {"<frame>": [x1, y1, x2, y2]}}]}`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundingBox, FrameDims, GroundTruthTube, QueryRecord, TrackProposal, VideoClip};
use crate::error::{Result, StvgError};
use crate::frames::sample_frames;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub t_s: usize,
    pub t_e: usize,
    pub boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    /// Source frame count.
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<GtRecord>,
    /// Proposal file, relative to the manifest directory.
    pub proposals: String,
}

impl ManifestEntry {
    pub fn query_id(&self) -> &str {
        self.query_id.as_deref().unwrap_or(&self.clip_id)
    }

    pub fn dims(&self) -> FrameDims {
        FrameDims {
            width: self.width,
            height: self.height,
        }
    }

    pub fn query_record(&self) -> Result<QueryRecord> {
        QueryRecord::new(self.query_id(), self.query.clone())
    }

    /// The clip with `n_frames_sampled` evenly spaced frames.
    pub fn clip(&self, n_frames_sampled: usize) -> Result<VideoClip> {
        VideoClip::new(
            self.clip_id.clone(),
            sample_frames(self.frames, n_frames_sampled),
            self.width,
            self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn proposals_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.proposals)
    }
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> StvgError {
    StvgError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn json_err(path: &Path, e: serde_json::Error) -> StvgError {
    parse_err(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string())
}

/// Validates a corner array and clips it to the frame, warning when clipped.
fn checked_box(c: [f64; 4], dims: FrameDims, field: &str) -> Result<BoundingBox<f64>> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(parse_err(field, "non-finite coordinate"));
    }
    if c[0] >= c[2] {
        return Err(parse_err(field, format!("x_min {} >= x_max {}", c[0], c[2])));
    }
    if c[1] >= c[3] {
        return Err(parse_err(field, format!("y_min {} >= y_max {}", c[1], c[3])));
    }
    let b = BoundingBox::from_corners(c)?;
    let clipped = b
        .clipped(dims)
        .ok_or_else(|| parse_err(field, format!("box {c:?} lies outside the {}x{} frame", dims.width, dims.height)))?;
    if clipped != b {
        warn!("{field}: box {c:?} clipped to the frame");
    }
    Ok(clipped)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut seen = HashSet::new();
    for (i, e) in manifest.entries.iter_mut().enumerate() {
        let at = |f: &str| format!("{}: entries[{i}].{f}", path.display());
        if !seen.insert(e.clip_id.clone()) {
            return Err(parse_err(at("clip_id"), format!("duplicate clip id {}", e.clip_id)));
        }
        if e.frames == 0 {
            return Err(parse_err(at("frames"), "must be at least 1"));
        }
        if e.width == 0 || e.height == 0 {
            return Err(parse_err(at("width"), "frame size must be positive"));
        }
        if e.query.trim().is_empty() {
            return Err(parse_err(at("query"), "empty query"));
        }
        if let Some(gt) = &mut e.gt {
            if gt.t_s > gt.t_e || gt.t_e >= e.frames {
                return Err(parse_err(
                    at("gt"),
                    format!("span {}..={} outside {} frames", gt.t_s, gt.t_e, e.frames),
                ));
            }
            if gt.boxes.len() != gt.t_e - gt.t_s + 1 {
                return Err(parse_err(
                    at("gt.boxes"),
                    format!("{} boxes for a {}-frame span", gt.boxes.len(), gt.t_e - gt.t_s + 1),
                ));
            }
            let dims = FrameDims {
                width: e.width,
                height: e.height,
            };
            for (k, c) in gt.boxes.iter_mut().enumerate() {
                *c = checked_box(*c, dims, &at(&format!("gt.boxes[{k}]")))?.corners();
            }
        }
        let p = manifest.base_dir.join(&e.proposals);
        if !p.is_file() {
            return Err(parse_err(at("proposals"), format!("missing file {}", p.display())));
        }
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

/// A tracker output on the source-frame axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTrack {
    pub id: String,
    pub boxes: BTreeMap<usize, BoundingBox<f64>>,
}

#[derive(Deserialize, Serialize)]
struct ProposalFile {
    tracks: Vec<TrackRecord>,
}

#[derive(Deserialize, Serialize)]
struct TrackRecord {
    id: String,
    boxes: BTreeMap<String, [f64; 4]>,
}

pub fn load_proposals(path: &Path, dims: FrameDims, frames: usize) -> Result<Vec<SourceTrack>> {
    let text = fs::read_to_string(path)?;
    let file: ProposalFile = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    let mut tracks = Vec::with_capacity(file.tracks.len());
    for (i, t) in file.tracks.into_iter().enumerate() {
        let mut boxes = BTreeMap::new();
        for (key, c) in t.boxes {
            let field = format!("{}: tracks[{i}].boxes[\"{key}\"]", path.display());
            let frame: usize = key
                .parse()
                .map_err(|_| parse_err(&field, "frame key is not a non-negative integer"))?;
            if frame >= frames {
                return Err(parse_err(&field, format!("frame {frame} beyond {frames} frames")));
            }
            boxes.insert(frame, checked_box(c, dims, &field)?);
        }
        if boxes.is_empty() {
            return Err(parse_err(format!("{}: tracks[{i}].boxes", path.display()), "track has no boxes"));
        }
        tracks.push(SourceTrack { id: t.id, boxes });
    }
    if tracks.is_empty() {
        return Err(parse_err(format!("{}: tracks", path.display()), "no tracks"));
    }
    Ok(tracks)
}

pub fn save_proposals(path: &Path, tracks: &[SourceTrack]) -> Result<()> {
    let file = ProposalFile {
        tracks: tracks
            .iter()
            .map(|t| TrackRecord {
                id: t.id.clone(),
                boxes: t.boxes.iter().map(|(k, b)| (k.to_string(), b.corners())).collect(),
            })
            .collect(),
    };
    fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

/// Half the sampling stride, the farthest a source box may sit from a sampled frame.
fn tolerance(clip: &VideoClip) -> usize {
    match clip.frame_indices.as_slice() {
        [a, b, ..] => (b - a) / 2,
        _ => 0,
    }
}

/// Tracks on the sampled axis. Each sampled frame takes the box at its source
/// frame, or the nearest source box within half a sampling stride. Tracks
/// left without any box are dropped.
pub fn resample_tracks(tracks: &[SourceTrack], clip: &VideoClip) -> Vec<TrackProposal<f64>> {
    let tol = tolerance(clip);
    tracks
        .iter()
        .filter_map(|t| {
            let boxes = clip
                .frame_indices
                .iter()
                .map(|s| {
                    let lo = s.saturating_sub(tol);
                    t.boxes
                        .range(lo..=s + tol)
                        .min_by_key(|(k, _)| (k.abs_diff(*s), **k))
                        .map(|(_, b)| *b)
                })
                .collect();
            match TrackProposal::new(t.id.clone(), boxes) {
                Ok(p) => Some(p),
                Err(_) => {
                    warn!("clip {}: track {} has no box on a sampled frame", clip.clip_id, t.id);
                    None
                }
            }
        })
        .collect()
}

/// Ground truth on the sampled axis: every sampled frame whose source frame
/// lies in the span keeps that frame's box. A span that falls between two
/// sampled frames maps to the sampled frame nearest its middle.
pub fn resample_gt(gt: &GtRecord, clip: &VideoClip) -> Result<GroundTruthTube<f64>> {
    let inside: Vec<usize> = (0..clip.frame_count)
        .filter(|i| (gt.t_s..=gt.t_e).contains(&clip.frame_indices[*i]))
        .collect();
    let boxes_at = |src: usize| BoundingBox::from_corners(gt.boxes[src - gt.t_s]);
    if inside.is_empty() {
        let mid = (gt.t_s + gt.t_e) / 2;
        let nearest = (0..clip.frame_count)
            .min_by_key(|i| clip.frame_indices[*i].abs_diff(mid))
            .expect("clip has frames");
        return GroundTruthTube::new(nearest, vec![boxes_at(mid)?]);
    }
    let boxes = inside
        .iter()
        .map(|i| boxes_at(clip.frame_indices[*i]))
        .collect::<Result<Vec<_>>>()?;
    GroundTruthTube::new(inside[0], boxes)
}
