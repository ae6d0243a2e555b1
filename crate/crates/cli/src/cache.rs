//! On-disk cache of backend sessions.
//!
//! One entry is an attention array (`<key>.bin`, f64) plus a sidecar
//! (`<key>.json`) with the layout and answer log-probabilities. The array is
//! renamed into place before the sidecar, so a visible sidecar always means a
//! complete entry. Writers go through a temp file and an atomic rename; two
//! writers of the same key produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::Context;
use log::debug;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stvg_core::backend::fixture::{read_array, write_array, LayoutRecord};
use stvg_core::backend::{prompt_sha256, Backend, BackendSession, LatentPrompt};
use stvg_core::domain::RawAttention;
use stvg_core::{TokenLayout, VideoClip};

pub const CACHE_ENV: &str = "STVG_CACHE_DIR";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    layout: LayoutRecord,
    logits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    dir: PathBuf,
    /// Distinguishes backends (model weights, fixture set) sharing a directory.
    backend_identity: String,
}

/// `$STVG_CACHE_DIR`, else `<out>/cache`.
pub fn default_cache_dir(out_dir: &Path) -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| out_dir.join("cache"))
}

impl AttentionCache {
    pub fn open(dir: impl Into<PathBuf>, backend_identity: impl Into<String>) -> anyhow::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating cache dir {}", dir.display()))?;
        Ok(Self {
            dir,
            backend_identity: backend_identity.into(),
        })
    }

    /// A zero latent gives the same session as no latent and shares its key.
    pub fn key(&self, video: &VideoClip, prompt: &str, latent: Option<&LatentPrompt<f64>>) -> String {
        let latent_hash = match latent {
            Some(l) if !l.is_zero() => l.content_hash(),
            _ => "zero".to_string(),
        };
        let order = serde_json::to_string(&video.order).expect("order serializes");
        let mut h = Sha256::new();
        for part in [
            self.backend_identity.as_str(),
            video.clip_id.as_str(),
            &serde_json::to_string(&video.frame_indices).expect("indices serialize"),
            &order,
            &prompt_sha256(prompt),
            &latent_hash,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{key}.bin")), self.dir.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> anyhow::Result<Option<BackendSession<f64>>> {
        let (bin, json) = self.paths(key);
        let Ok(text) = fs::read_to_string(&json) else {
            return Ok(None);
        };
        let side: Sidecar = serde_json::from_str(&text).with_context(|| format!("corrupt cache entry {}", json.display()))?;
        let values = read_array::<f64>(&bin).with_context(|| format!("corrupt cache entry {}", bin.display()))?;
        Ok(Some(BackendSession {
            layout: TokenLayout::try_from(&side.layout)?,
            raw_attention: RawAttention::new(values)?,
            answer_logits: side.logits,
        }))
    }

    pub fn put(&self, key: &str, session: &BackendSession<f64>) -> anyhow::Result<()> {
        let (bin, json) = self.paths(key);
        let side = Sidecar {
            layout: session.layout.into(),
            logits: session.answer_logits.clone(),
        };
        let tmp_bin = self.tmp_path(key);
        write_array(&tmp_bin, &session.raw_attention.values)?;
        fs::rename(&tmp_bin, &bin)?;
        let tmp_json = self.tmp_path(key);
        fs::write(&tmp_json, serde_json::to_vec(&side)?)?;
        fs::rename(&tmp_json, &json)?;
        Ok(())
    }

    fn tmp_path(&self, key: &str) -> PathBuf {
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        self.dir.join(format!(".{key}.{}.{n}.tmp", std::process::id()))
    }

    /// Cached session, or a fresh backend run that is then stored.
    pub fn run(
        &self,
        backend: &dyn Backend<f64>,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<f64>>,
    ) -> anyhow::Result<BackendSession<f64>> {
        let key = self.key(video, prompt, latent);
        if let Some(s) = self.get(&key)? {
            debug!("cache hit {key}");
            return Ok(s);
        }
        let latent = latent.filter(|l| !l.is_zero());
        let session = backend.run(video, prompt, latent)?;
        self.put(&key, &session)?;
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use stvg_core::backend::{ToyBackend, ToyDims};
    use stvg_core::FrameOrder;

    fn clip() -> VideoClip {
        VideoClip::new("c", vec![0, 3, 6], 32, 32).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let toy = ToyBackend::<f64>::new(3, ToyDims::default()).unwrap();
        let cache = AttentionCache::open(dir.path(), "toy:3").unwrap();
        let fresh = cache.run(&toy, &clip(), "a dog runs", None).unwrap();
        let again = cache.run(&toy, &clip(), "a dog runs", None).unwrap();
        assert_eq!(fresh, again);
        assert_eq!(fresh, toy.run(&clip(), "a dog runs", None).unwrap());
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2, "{names:?}");
    }

    #[test]
    fn keys_separate_everything_that_matters() {
        let cache = AttentionCache::open(tempfile::tempdir().unwrap().path(), "toy:3").unwrap();
        let other = AttentionCache::open(tempfile::tempdir().unwrap().path(), "toy:4").unwrap();
        let c = clip();
        let zero = LatentPrompt::<f64>::zeros((4, 2));
        let mut tuned = zero.clone();
        tuned.values[[1, 1]] = 1e-9;
        let k = cache.key(&c, "p", None);
        assert_eq!(k, cache.key(&c, "p", Some(&zero)));
        assert_ne!(k, cache.key(&c, "p", Some(&tuned)));
        assert_ne!(k, cache.key(&c, "q", None));
        assert_ne!(k, cache.key(&c.reversed(), "p", None));
        assert_ne!(k, other.key(&c, "p", None));
        let mut c2 = c.clone();
        c2.frame_indices = vec![0, 3, 7];
        assert_ne!(k, cache.key(&c2, "p", None));
        assert_eq!(c.reversed().order, FrameOrder::Reversed);
    }
}
