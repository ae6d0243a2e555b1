//! Attention-exposing multimodal backend contract.
//!
//! A backend turns `(video, prompt, latent)` into a [`BackendSession`]: the
//! token layout, post-softmax attention of every layer and head, and the
//! log-probabilities of the first answer token. Differentiable backends also
//! return the gradient of a session loss with respect to the additive latent
//! visual prompt.

use std::collections::BTreeMap;

use ndarray::{Array2, Array4};
use sha2::{Digest, Sha256};

use crate::domain::{RawAttention, TokenLayout, VideoClip};
use crate::error::{Result, StvgError};
use crate::scalar::Scalar;

pub mod fixture;
pub mod scripted;
pub mod toy;

pub use scripted::ScriptedBackend;
pub use toy::{ToyBackend, ToyDims};

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSession<T> {
    pub layout: TokenLayout,
    pub raw_attention: RawAttention<T>,
    /// Log-probabilities at the first generated-answer position, keyed by the
    /// backend's vocabulary surface form.
    pub answer_logits: BTreeMap<String, T>,
}

impl<T: Scalar> BackendSession<T> {
    /// Key of `word` in [`Self::answer_logits`], matched case-insensitively.
    /// An exact match wins over a case-folded one.
    pub fn logit_key(&self, word: &str) -> Result<&str> {
        if let Some((k, _)) = self.answer_logits.get_key_value(word) {
            return Ok(k);
        }
        self.answer_logits
            .keys()
            .find(|k| k.trim().eq_ignore_ascii_case(word))
            .map(String::as_str)
            .ok_or_else(|| StvgError::Vocabulary(word.to_string()))
    }

    pub fn answer_logit(&self, word: &str) -> Result<T> {
        let key = self.logit_key(word)?;
        Ok(self.answer_logits[key])
    }
}

/// `logit("yes") - logit("no")` at the first answer position.
pub fn logit_gap<T: Scalar>(session: &BackendSession<T>) -> Result<T> {
    Ok(session.answer_logit("yes")? - session.answer_logit("no")?)
}

/// Additive prompt on the visual-token embeddings, shape `(m_visual, embed_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrompt<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> LatentPrompt<T> {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            values: Array2::zeros(shape),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Hex SHA-256 over the shape and little-endian element bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let (r, c) = self.shape();
        h.update((r as u64).to_le_bytes());
        h.update((c as u64).to_le_bytes());
        for v in self.values.iter() {
            h.update(v.le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Adjoint of a scalar loss with respect to the session outputs.
#[derive(Debug, Clone, Default)]
pub struct SessionGradient<T> {
    /// d loss / d log-probability, keyed like `answer_logits`.
    pub d_logits: BTreeMap<String, T>,
    /// d loss / d attention, same shape as the raw attention.
    pub d_attention: Option<Array4<T>>,
}

/// A differentiable scalar function of a session.
pub trait SessionLoss<T: Scalar> {
    fn evaluate(&self, session: &BackendSession<T>) -> Result<(T, SessionGradient<T>)>;
}

/// Loss value, its gradient w.r.t. the latent, and the session it came from.
#[derive(Debug, Clone)]
pub struct LatentGradient<T> {
    pub loss: T,
    pub gradient: Array2<T>,
    pub session: BackendSession<T>,
}

pub trait Backend<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    /// `(m_visual, embed_dim)` of the visual span for this clip.
    fn latent_shape(&self, video: &VideoClip) -> Result<(usize, usize)>;

    fn run(
        &self,
        video: &VideoClip,
        prompt: &str,
        latent: Option<&LatentPrompt<T>>,
    ) -> Result<BackendSession<T>>;

    fn differentiable(&self) -> bool {
        false
    }

    fn gradient_wrt_latent(
        &self,
        _video: &VideoClip,
        _prompt: &str,
        _latent: &LatentPrompt<T>,
        _loss: &dyn SessionLoss<T>,
    ) -> Result<LatentGradient<T>> {
        Err(StvgError::GradientUnsupported(self.name()))
    }
}

/// Free-function form of [`Backend::gradient_wrt_latent`].
pub fn gradient_wrt_latent<T: Scalar>(
    backend: &dyn Backend<T>,
    video: &VideoClip,
    prompt: &str,
    latent: &LatentPrompt<T>,
    loss: &dyn SessionLoss<T>,
) -> Result<Array2<T>> {
    Ok(backend.gradient_wrt_latent(video, prompt, latent, loss)?.gradient)
}

pub(crate) fn check_latent<T: Scalar>(
    latent: Option<&LatentPrompt<T>>,
    expected: (usize, usize),
) -> Result<()> {
    match latent {
        Some(l) if l.shape() != expected => Err(StvgError::LatentShape {
            expected,
            got: l.shape(),
        }),
        _ => Ok(()),
    }
}

/// Hex SHA-256 of the prompt text, the fixture and cache key.
pub fn prompt_sha256(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn session(yes: f64, no: f64) -> BackendSession<f64> {
        let layout = TokenLayout::new(0, 0, 1, (1, 1, 1)).unwrap();
        let mut a = Array4::zeros((1, 1, 2, 2));
        a[[0, 0, 0, 0]] = 1.0;
        a[[0, 0, 1, 0]] = 0.5;
        a[[0, 0, 1, 1]] = 0.5;
        BackendSession {
            layout,
            raw_attention: RawAttention::new(a).unwrap(),
            answer_logits: [("Yes".to_string(), yes), ("no".to_string(), no)].into(),
        }
    }

    #[test]
    fn gap_is_a_plain_difference() {
        assert_eq!(logit_gap(&session(2.0, 2.0)).unwrap(), 0.0);
        assert_eq!(logit_gap(&session(1.5, 0.5)).unwrap(), 1.0);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let s = session(1.0, 0.0);
        assert_eq!(s.logit_key("yes").unwrap(), "Yes");
        assert_eq!(s.logit_key("NO").unwrap(), "no");
    }

    #[test]
    fn missing_vocabulary_entry() {
        let mut s = session(1.0, 0.0);
        s.answer_logits.remove("no");
        let err = logit_gap(&s).unwrap_err();
        assert!(err.to_string().starts_with("vocabulary error"));
    }

    #[test]
    fn latent_hash_depends_on_content() {
        let a = LatentPrompt::<f64>::zeros((2, 3));
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.values[[1, 2]] = 1e-9;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), LatentPrompt::<f64>::zeros((3, 2)).content_hash());
    }
}
