//! Decomposed spatio-temporal highlighting.
//!
//! The query is split into an attribute description (drives the spatial
//! branch) and an action description (drives the temporal branch). Each is
//! turned into an existence question, and a latent visual prompt is tuned at
//! test time so the backend answers "yes" more confidently.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StvgError};

pub mod decompose;
pub mod lra;

pub use decompose::{
    decompose_query, fallback_decomposition, DecompositionClient, DecompositionRequest, FixtureClient,
    SubprocessClient,
};
pub use lra::{highlighted_attention, lra_loss, optimize_prompt, LraLoss, LraOutcome, LraStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    LlmClient,
    Fallback,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQueryPair {
    pub attribute_text: String,
    pub action_text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterrogativePrompt {
    pub text: String,
    pub kind: PromptKind,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// `"Is there <description> in this video?"`, with a leading article
/// lowercased and terminal punctuation removed from the description.
pub fn make_interrogative(description: &str, kind: PromptKind) -> Result<InterrogativePrompt> {
    let body = description
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if body.is_empty() {
        return Err(StvgError::Invalid("empty description".into()));
    }
    let body = match body.split_once(char::is_whitespace) {
        Some((first, rest)) if ARTICLES.contains(&first.to_lowercase().as_str()) => {
            format!("{} {}", first.to_lowercase(), rest.trim_start())
        }
        None if ARTICLES.contains(&body.to_lowercase().as_str()) => body.to_lowercase(),
        _ => body.to_string(),
    };
    Ok(InterrogativePrompt {
        text: format!("Is there {body} in this video?"),
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentInit {
    #[default]
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LraConfig {
    pub n_ep: usize,
    pub step_size: f64,
    #[serde(default)]
    pub init: LatentInit,
}

impl Default for LraConfig {
    fn default() -> Self {
        Self {
            n_ep: 10,
            step_size: 1e-2,
            init: LatentInit::Zeros,
        }
    }
}

impl LraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ep == 0 {
            return Err(StvgError::Invalid("n_ep must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(StvgError::Invalid(format!("step_size {} must be positive", self.step_size)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interrogative_template() {
        let p = make_interrogative("a man on the left of the man in the orange shirt", PromptKind::Spatial).unwrap();
        assert_eq!(p.text, "Is there a man on the left of the man in the orange shirt in this video?");
        assert_eq!(make_interrogative("A dog.", PromptKind::Temporal).unwrap().text, "Is there a dog in this video?");
        assert_eq!(make_interrogative("The  cat!? ", PromptKind::Spatial).unwrap().text, "Is there the cat in this video?");
        assert_eq!(make_interrogative("Alice waves", PromptKind::Spatial).unwrap().text, "Is there Alice waves in this video?");
        assert!(make_interrogative(" ?. ", PromptKind::Spatial).is_err());
    }

    #[test]
    fn lra_config_validation() {
        assert!(LraConfig::default().validate().is_ok());
        assert!(LraConfig { n_ep: 0, ..Default::default() }.validate().is_err());
        assert!(LraConfig { step_size: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn always_a_question(s in "[A-Za-z ,.!]{0,40}") {
            if let Ok(p) = make_interrogative(&s, PromptKind::Spatial) {
                proptest::prop_assert!(p.text.starts_with("Is there "));
                proptest::prop_assert!(p.text.ends_with(" in this video?"));
            }
        }
    }
}
