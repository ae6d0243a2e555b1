//! Run configuration and its fingerprint.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use stvg_core::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Toy { seed: u64 },
    Scripted { dir: PathBuf },
    /// Adapter for an out-of-process model, looked up by id.
    External { id: String },
}

impl FromStr for BackendSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .with_context(|| format!("backend {s:?}: expected toy:SEED, scripted:DIR or external:ID"))?;
        match kind {
            "toy" => Ok(Self::Toy {
                seed: arg.parse().with_context(|| format!("backend {s:?}: bad seed"))?,
            }),
            "scripted" if !arg.is_empty() => Ok(Self::Scripted { dir: arg.into() }),
            "external" if !arg.is_empty() => Ok(Self::External { id: arg.into() }),
            _ => bail!("backend {s:?}: expected toy:SEED, scripted:DIR or external:ID"),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Toy { seed } => write!(f, "toy:{seed}"),
            Self::Scripted { dir } => write!(f, "scripted:{}", dir.display()),
            Self::External { id } => write!(f, "external:{id}"),
        }
    }
}

/// The four ablation switches. Each is independent of the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Flags {
    /// Pick the most activated special token; off averages all of them.
    pub gti: bool,
    /// Spatial branch uses the attribute question and a tuned latent.
    pub spatial_prompt: bool,
    /// Temporal branch uses the action question and a tuned latent.
    pub temporal_prompt: bool,
    /// Assemble the spatial map with a reversed-frame run.
    pub tas: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            gti: true,
            spatial_prompt: true,
            temporal_prompt: true,
            tas: true,
        }
    }
}

impl Flags {
    pub fn dsth(&self) -> bool {
        self.spatial_prompt || self.temporal_prompt
    }

    /// Every combination of the four flags, all-on first.
    pub fn matrix() -> Vec<Flags> {
        (0..16u8)
            .map(|m| Flags {
                gti: m & 1 == 0,
                spatial_prompt: m & 2 == 0,
                temporal_prompt: m & 4 == 0,
                tas: m & 8 == 0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecomposerSpec {
    Fixture(PathBuf),
    /// Program and arguments; one JSON line in, one out.
    Command(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub backend: BackendSpec,
    pub pipeline: PipelineConfig,
    pub flags: Flags,
    pub out_dir: PathBuf,
    /// `None` disables the attention cache.
    pub cache_dir: Option<PathBuf>,
    pub heatmaps: bool,
    pub jobs: usize,
    pub decomposer: Option<DecomposerSpec>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, backend: BackendSpec, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            backend,
            pipeline: PipelineConfig::default(),
            flags: Flags::default(),
            out_dir: out_dir.into(),
            cache_dir: None,
            heatmaps: false,
            jobs: 1,
            decomposer: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.pipeline.validate()?;
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("output dir {} is not writable", self.out_dir.display()))?;
        let probe = self.out_dir.join(".write-probe");
        fs::write(&probe, b"")
            .with_context(|| format!("output dir {} is not writable", self.out_dir.display()))?;
        let _ = fs::remove_file(probe);
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Canonical description of everything that affects results. Paths are
/// replaced by content hashes so moving a corpus keeps the fingerprint.
pub fn canonical_config(cfg: &RunConfig, backend_identity: &str) -> anyhow::Result<Value> {
    let decomposer = match &cfg.decomposer {
        None => Value::Null,
        Some(DecomposerSpec::Fixture(p)) => json!({"fixture_sha256": sha256_file(p)?}),
        Some(DecomposerSpec::Command(argv)) => json!({"command": argv}),
    };
    Ok(json!({
        "backend": backend_identity,
        "decomposer": decomposer,
        "flags": cfg.flags,
        "heatmaps": cfg.heatmaps,
        "manifest_sha256": sha256_file(&cfg.manifest)?,
        "pipeline": cfg.pipeline,
    }))
}

/// Hex SHA-256 of the compact JSON form (object keys are sorted).
pub fn fingerprint(canonical: &Value) -> String {
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}
