//! Logit-guided re-attention: test-time tuning of an additive latent visual
//! prompt against `1 - exp(logit_yes - logit_no)`.

use std::collections::BTreeMap;

use log::warn;

use super::{InterrogativePrompt, LatentInit, LraConfig};
use crate::backend::{logit_gap, Backend, BackendSession, LatentPrompt, SessionGradient, SessionLoss};
use crate::domain::{GroundingAttentionMap, VideoClip};
use crate::error::{Result, StvgError};
use crate::gti::{aggregate_attention, select_grounding_token};
use crate::scalar::Scalar;

/// `1 - exp(gap)`; unbounded below, approaches 1 as the gap goes to -inf.
pub fn lra_loss<T: Scalar>(session: &BackendSession<T>) -> Result<T> {
    Ok(T::one() - logit_gap(session)?.exp())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LraLoss;

impl<T: Scalar> SessionLoss<T> for LraLoss {
    fn evaluate(&self, session: &BackendSession<T>) -> Result<(T, SessionGradient<T>)> {
        let e = logit_gap(session)?.exp();
        let mut d_logits = BTreeMap::new();
        d_logits.insert(session.logit_key("yes")?.to_string(), -e);
        d_logits.insert(session.logit_key("no")?.to_string(), e);
        Ok((
            T::one() - e,
            SessionGradient {
                d_logits,
                d_attention: None,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LraStatus {
    Converged,
    /// A non-finite loss or gradient stopped the loop early.
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LraOutcome<T> {
    /// Last finite latent.
    pub latent: LatentPrompt<T>,
    /// Loss before each update, starting with the initial latent.
    pub losses: Vec<T>,
    pub initial_gap: T,
    pub final_loss: T,
    pub final_gap: T,
    pub steps_taken: usize,
    pub status: LraStatus,
}

/// `cfg.n_ep` plain gradient-descent steps on the latent, parameters frozen.
pub fn optimize_prompt<T: Scalar>(
    backend: &dyn Backend<T>,
    video: &VideoClip,
    prompt: &InterrogativePrompt,
    cfg: &LraConfig,
) -> Result<LraOutcome<T>> {
    cfg.validate()?;
    if !backend.differentiable() {
        return Err(StvgError::GradientUnsupported(backend.name()));
    }
    let shape = backend.latent_shape(video)?;
    let mut latent = match cfg.init {
        LatentInit::Zeros => LatentPrompt::zeros(shape),
    };
    let step = T::of(cfg.step_size);
    let mut losses = Vec::with_capacity(cfg.n_ep);
    let mut initial_gap = None;
    let mut status = LraStatus::Converged;
    let mut steps_taken = 0;

    for _ in 0..cfg.n_ep {
        let g = backend.gradient_wrt_latent(video, &prompt.text, &latent, &LraLoss)?;
        if initial_gap.is_none() {
            initial_gap = Some(logit_gap(&g.session)?);
        }
        if !g.loss.is_finite() || g.gradient.iter().any(|v| !v.is_finite()) {
            status = LraStatus::NumericalFailure;
            break;
        }
        losses.push(g.loss);
        let next = LatentPrompt {
            values: &latent.values - &(g.gradient * step),
        };
        if !next.is_finite() {
            status = LraStatus::NumericalFailure;
            break;
        }
        latent = next;
        steps_taken += 1;
    }

    let session = backend.run(video, &prompt.text, Some(&latent))?;
    let final_gap = logit_gap(&session)?;
    let final_loss = lra_loss(&session)?;
    if !final_loss.is_finite() {
        status = LraStatus::NumericalFailure;
    }
    if status == LraStatus::NumericalFailure {
        warn!(
            "clip {}: LRA stopped after {steps_taken} steps on a non-finite value",
            video.clip_id
        );
    }
    Ok(LraOutcome {
        latent,
        losses,
        initial_gap: initial_gap.unwrap_or(final_gap),
        final_loss,
        final_gap,
        steps_taken,
        status,
    })
}

/// Grounding-token map of a run with `latent` applied.
pub fn highlighted_attention<T: Scalar>(
    backend: &dyn Backend<T>,
    video: &VideoClip,
    prompt: &str,
    latent: Option<&LatentPrompt<T>>,
) -> Result<GroundingAttentionMap<T>> {
    let session = backend.run(video, prompt, latent)?;
    let sta = aggregate_attention(&session.raw_attention, &session.layout)?;
    Ok(select_grounding_token(&sta)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ToyBackend, ToyDims};
    use crate::domain::{RawAttention, TokenLayout};
    use crate::dsth::PromptKind;
    use ndarray::Array4;

    fn scripted_session(gap: f64) -> BackendSession<f64> {
        let layout = TokenLayout::new(0, 0, 1, (1, 1, 1)).unwrap();
        let mut a = Array4::zeros((1, 1, 2, 2));
        a[[0, 0, 0, 0]] = 1.0;
        a[[0, 0, 1, 1]] = 1.0;
        BackendSession {
            layout,
            raw_attention: RawAttention::new(a).unwrap(),
            answer_logits: [("yes".to_string(), gap), ("no".to_string(), 0.0)].into(),
        }
    }

    #[test]
    fn loss_closed_form() {
        assert_eq!(lra_loss(&scripted_session(0.0)).unwrap(), 0.0);
        assert!((lra_loss(&scripted_session(2f64.ln())).unwrap() + 1.0).abs() < 1e-15);
        assert!((lra_loss(&scripted_session(-50.0)).unwrap() - 1.0).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for g in -20..20 {
            let l = lra_loss(&scripted_session(g as f64 * 0.25)).unwrap();
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn one_step_is_plain_gradient_descent() {
        let be = ToyBackend::<f64>::new(4, ToyDims::default()).unwrap();
        let v = VideoClip::new("c", vec![0, 5], 32, 32).unwrap();
        let p = crate::dsth::make_interrogative("a dog", PromptKind::Spatial).unwrap();
        let cfg = LraConfig {
            n_ep: 1,
            step_size: 0.05,
            ..Default::default()
        };
        let out = optimize_prompt(&be, &v, &p, &cfg).unwrap();
        let zero = LatentPrompt::zeros(be.latent_shape(&v).unwrap());
        let g = be.gradient_wrt_latent(&v, &p.text, &zero, &LraLoss).unwrap();
        assert_eq!(out.latent.values, &zero.values - &(g.gradient * 0.05));
        assert_eq!(out.steps_taken, 1);
        assert_eq!(out.status, LraStatus::Converged);
    }

    #[test]
    fn zero_latent_matches_training_free_map() {
        let be = ToyBackend::<f64>::new(4, ToyDims::default()).unwrap();
        let v = VideoClip::new("c", vec![0, 5], 32, 32).unwrap();
        let zero = LatentPrompt::zeros(be.latent_shape(&v).unwrap());
        let a = highlighted_attention(&be, &v, "q", Some(&zero)).unwrap();
        let b = highlighted_attention(&be, &v, "q", None).unwrap();
        assert_eq!(a, b);
    }
}
