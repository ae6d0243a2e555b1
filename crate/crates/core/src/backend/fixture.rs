//! On-disk attention fixtures.
//!
//! A fixture directory holds `index.json` plus one binary per attention
//! array: 8-byte magic, four little-endian `u32` dimensions, then row-major
//! little-endian elements. `STVGATTN` marks `f32` data; `STVGAT64` marks
//! `f64` data (used by the run cache).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::domain::{FrameOrder, TokenLayout};
use crate::error::{Result, StvgError};

pub const MAGIC_F32: &[u8; 8] = b"STVGATTN";
pub const MAGIC_F64: &[u8; 8] = b"STVGAT64";
const HEADER_LEN: usize = 8 + 16;

pub trait Element: Copy + Default {
    const MAGIC: &'static [u8; 8];
    const SIZE: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const MAGIC: &'static [u8; 8] = MAGIC_F32;
    const SIZE: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const MAGIC: &'static [u8; 8] = MAGIC_F64;
    const SIZE: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

pub fn encode_array<E: Element>(a: &Array4<E>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + a.len() * E::SIZE);
    out.extend_from_slice(E::MAGIC);
    let (d0, d1, d2, d3) = a.dim();
    for d in [d0, d1, d2, d3] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    // iter() walks logical row-major order regardless of memory layout
    for v in a.iter() {
        v.put(&mut out);
    }
    out
}

pub fn decode_array<E: Element>(bytes: &[u8]) -> Result<Array4<E>> {
    if bytes.len() < HEADER_LEN {
        return Err(StvgError::FixtureFormat("truncated header".into()));
    }
    if &bytes[..8] != E::MAGIC {
        return Err(StvgError::FixtureFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(E::MAGIC)
        )));
    }
    let dim = |i: usize| {
        u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize
    };
    let shape = (dim(0), dim(1), dim(2), dim(3));
    let count = shape.0 * shape.1 * shape.2 * shape.3;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * E::SIZE {
        return Err(StvgError::FixtureFormat(format!(
            "shape {shape:?} needs {} data bytes, found {}",
            count * E::SIZE,
            body.len()
        )));
    }
    let data = body.chunks_exact(E::SIZE).map(E::get).collect();
    Array4::from_shape_vec(shape, data).map_err(|e| StvgError::FixtureFormat(e.to_string()))
}

pub fn write_array<E: Element>(path: &Path, a: &Array4<E>) -> Result<()> {
    fs::write(path, encode_array(a))?;
    Ok(())
}

pub fn read_array<E: Element>(path: &Path) -> Result<Array4<E>> {
    decode_array(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub n_sys: usize,
    pub m_visual: usize,
    pub n_query: usize,
    pub n_role: usize,
    pub grid: [usize; 3],
}

impl From<TokenLayout> for LayoutRecord {
    fn from(l: TokenLayout) -> Self {
        Self {
            n_sys: l.n_sys,
            m_visual: l.m_visual,
            n_query: l.n_query,
            n_role: l.n_role,
            grid: [l.grid.0, l.grid.1, l.grid.2],
        }
    }
}

impl TryFrom<&LayoutRecord> for TokenLayout {
    type Error = StvgError;
    fn try_from(r: &LayoutRecord) -> Result<Self> {
        let l = TokenLayout {
            n_sys: r.n_sys,
            m_visual: r.m_visual,
            n_query: r.n_query,
            n_role: r.n_role,
            grid: (r.grid[0], r.grid[1], r.grid[2]),
        };
        l.validate()?;
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub clip_id: String,
    pub prompt_sha256: String,
    #[serde(default)]
    pub order: FrameOrder,
    /// Informational copy of the prompt text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub layout: LayoutRecord,
    pub attention_file: String,
    pub logits: BTreeMap<String, f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureIndex {
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    pub entries: Vec<IndexEntry>,
}

fn default_embed_dim() -> usize {
    1
}

/// One stored backend response.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRecord {
    pub clip_id: String,
    pub prompt: String,
    pub order: FrameOrder,
    pub layout: TokenLayout,
    pub attention: Array4<f32>,
    pub logits: BTreeMap<String, f32>,
}

/// Writes `records` as a fixture directory, replacing any `index.json`.
pub fn write_fixture(dir: &Path, embed_dim: usize, records: &[FixtureRecord]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let n = r.layout.total();
        let (_, _, a, b) = r.attention.dim();
        if a != n || b != n {
            return Err(StvgError::Shape(format!(
                "fixture {}: attention {:?} vs layout total {n}",
                r.clip_id,
                r.attention.dim()
            )));
        }
        let file = format!("attn_{i:04}.bin");
        write_array(&dir.join(&file), &r.attention)?;
        entries.push(IndexEntry {
            clip_id: r.clip_id.clone(),
            prompt_sha256: super::prompt_sha256(&r.prompt),
            order: r.order,
            prompt: Some(r.prompt.clone()),
            layout: r.layout.into(),
            attention_file: file,
            logits: r.logits.clone(),
        });
    }
    let index = FixtureIndex { embed_dim, entries };
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_vec_pretty(&index)?)?;
    Ok(path)
}

pub fn read_index(dir: &Path) -> Result<FixtureIndex> {
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| StvgError::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}
