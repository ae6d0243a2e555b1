//! Backend that replays stored attention and logits from a fixture directory.

use std::collections::HashMap;
use std::marker::PhantomData;
use std::path::Path;

use super::fixture::{read_array, read_index, FixtureRecord};
use super::{check_latent, prompt_sha256, Backend, BackendSession, LatentPrompt};
use crate::domain::{FrameOrder, RawAttention, TokenLayout, VideoClip};
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

type Key = (String, String, FrameOrder);

#[derive(Debug, Clone)]
pub struct ScriptedBackend<T> {
    embed_dim: usize,
    entries: HashMap<Key, FixtureRecord>,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> ScriptedBackend<T> {
    pub fn open(dir: &Path) -> Result<Self> {
        let index = read_index(dir)?;
        let mut entries = HashMap::new();
        for e in index.entries {
            let layout = TokenLayout::try_from(&e.layout)?;
            let attention = read_array::<f32>(&dir.join(&e.attention_file))?;
            let n = layout.total();
            if attention.dim().2 != n || attention.dim().3 != n {
                return Err(StvgError::FixtureFormat(format!(
                    "{}: attention {:?} does not match layout total {n}",
                    e.attention_file,
                    attention.dim()
                )));
            }
            let record = FixtureRecord {
                clip_id: e.clip_id.clone(),
                prompt: e.prompt.unwrap_or_default(),
                order: e.order,
                layout,
                attention,
                logits: e.logits,
            };
            entries.insert((e.clip_id, e.prompt_sha256, e.order), record);
        }
        Ok(Self {
            embed_dim: index.embed_dim,
            entries,
            _scalar: PhantomData,
        })
    }

    /// In-memory backend over `records`.
    pub fn from_records(embed_dim: usize, records: Vec<FixtureRecord>) -> Self {
        let entries = records
            .into_iter()
            .map(|r| ((r.clip_id.clone(), prompt_sha256(&r.prompt), r.order), r))
            .collect();
        Self {
            embed_dim,
            entries,
            _scalar: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, video: &VideoClip, prompt: &str) -> Result<&FixtureRecord> {
        let sha = prompt_sha256(prompt);
        self.entries
            .get(&(video.clip_id.clone(), sha.clone(), video.order))
            .ok_or(StvgError::FixtureMiss {
                clip_id: video.clip_id.clone(),
                prompt_sha256: sha,
            })
    }
}

impl<T: Scalar> Backend<T> for ScriptedBackend<T> {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn latent_shape(&self, video: &VideoClip) -> Result<(usize, usize)> {
        let m = self
            .entries
            .values()
            .find(|r| r.clip_id == video.clip_id)
            .map(|r| r.layout.m_visual)
            .ok_or_else(|| StvgError::FixtureMiss {
                clip_id: video.clip_id.clone(),
                prompt_sha256: "*".into(),
            })?;
        Ok((m, self.embed_dim))
    }

    fn run(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<T>>,
    ) -> Result<BackendSession<T>> {
        let record = self.lookup(video, prompt)?;
        check_latent(latent, (record.layout.m_visual, self.embed_dim))?;
        if latent.is_some_and(|l| !l.is_zero()) {
            return Err(StvgError::Unsupported(
                "scripted backend cannot apply a non-zero latent prompt".into(),
            ));
        }
        Ok(BackendSession {
            layout: record.layout,
            raw_attention: RawAttention::new(record.attention.mapv(|v| T::of(v as f64)))?,
            answer_logits: record
                .logits
                .iter()
                .map(|(k, v)| (k.clone(), T::of(*v as f64)))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::fixture::write_fixture;
    use crate::backend::{SessionGradient, SessionLoss};
    use ndarray::Array4;

    fn record() -> FixtureRecord {
        let layout = TokenLayout::new(1, 1, 2, (1, 2, 2)).unwrap();
        let n = layout.total();
        let attention = Array4::from_shape_fn((1, 2, n, n), |(_, h, i, j)| {
            if j <= i {
                (1.0 + h as f32) / (i + 1) as f32 / (1.0 + h as f32)
            } else {
                0.0
            }
        });
        FixtureRecord {
            clip_id: "c1".into(),
            prompt: "a red car".into(),
            order: FrameOrder::Forward,
            layout,
            attention,
            logits: [("yes".to_string(), 1.5f32), ("no".to_string(), 0.5f32)].into(),
        }
    }

    struct Zero;
    impl SessionLoss<f64> for Zero {
        fn evaluate(&self, _: &BackendSession<f64>) -> Result<(f64, SessionGradient<f64>)> {
            Ok((0.0, SessionGradient::default()))
        }
    }

    #[test]
    fn replays_stored_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let r = record();
        write_fixture(dir.path(), 4, std::slice::from_ref(&r)).unwrap();
        let be = ScriptedBackend::<f64>::open(dir.path()).unwrap();
        let v = VideoClip::new("c1", vec![0], 10, 10).unwrap();
        let s = be.run(&v, "a red car", None).unwrap();
        assert_eq!(s.layout, r.layout);
        assert_eq!(s.raw_attention.values, r.attention.mapv(|x| x as f64));
        assert_eq!(crate::backend::logit_gap(&s).unwrap(), 1.0);
        let zero = LatentPrompt::zeros(be.latent_shape(&v).unwrap());
        assert_eq!(be.run(&v, "a red car", Some(&zero)).unwrap(), s);
    }

    #[test]
    fn misses_and_gradients() {
        let be = ScriptedBackend::<f64>::from_records(4, vec![record()]);
        let v = VideoClip::new("c1", vec![0], 10, 10).unwrap();
        let err = be.run(&v, "a blue car", None).unwrap_err();
        assert!(err.to_string().starts_with("fixture miss"));
        assert!(be.run(&v.reversed(), "a red car", None).is_err());
        let lat = LatentPrompt::zeros((4, 4));
        let err = be.gradient_wrt_latent(&v, "a red car", &lat, &Zero).unwrap_err();
        assert!(err.to_string().starts_with("gradient unsupported"));
        let mut nz = lat.clone();
        nz.values[[0, 0]] = 1.0;
        assert!(be.run(&v, "a red car", Some(&nz)).is_err());
    }
}
