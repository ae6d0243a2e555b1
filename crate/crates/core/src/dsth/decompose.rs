//! Query decomposition into attribute and action descriptions.
//!
//! An external LLM client may be configured; it receives one JSON request
//! line and answers with one JSON line `{"attribute": .., "action": ..}`.
//! Any missing or malformed answer falls back to a deterministic rule:
//! the attribute is the query up to its main finite verb, the action is the
//! subject noun phrase followed by the verb phrase.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Provenance, SubQueryPair};
use crate::domain::QueryRecord;
use crate::error::{Result, StvgError};

pub const INSTRUCTION_TEMPLATE_ID: &str = "stvg-decompose-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionRequest {
    pub query_id: String,
    pub text: String,
    pub instruction_template_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionResponse {
    pub attribute: String,
    pub action: String,
}

pub trait DecompositionClient: Send + Sync {
    fn provenance(&self) -> Provenance {
        Provenance::LlmClient
    }

    /// Raw response line for `request`.
    fn call(&self, request: &DecompositionRequest) -> Result<String>;
}

/// Serves decompositions from a `query_id -> {attribute, action}` file.
#[derive(Debug, Clone, Default)]
pub struct FixtureClient {
    pub entries: BTreeMap<String, DecompositionResponse>,
}

impl FixtureClient {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let entries = serde_json::from_str(&text).map_err(|e| StvgError::Parse {
            location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })?;
        Ok(Self { entries })
    }
}

impl DecompositionClient for FixtureClient {
    fn provenance(&self) -> Provenance {
        Provenance::Fixture
    }

    fn call(&self, request: &DecompositionRequest) -> Result<String> {
        let entry = self
            .entries
            .get(&request.query_id)
            .ok_or_else(|| StvgError::Invalid(format!("no fixture for {}", request.query_id)))?;
        Ok(serde_json::to_string(entry)?)
    }
}

/// Spawns `program args..` per request; one JSON line in, one JSON line out.
#[derive(Debug, Clone)]
pub struct SubprocessClient {
    pub program: String,
    pub args: Vec<String>,
}

impl DecompositionClient for SubprocessClient {
    fn call(&self, request: &DecompositionRequest) -> Result<String> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            serde_json::to_writer(&mut stdin, request)?;
            stdin.write_all(b"\n")?;
        }
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped stdout")).read_line(&mut line)?;
        let status = child.wait()?;
        if !status.success() {
            return Err(StvgError::Invalid(format!("{} exited with {status}", self.program)));
        }
        Ok(line)
    }
}

fn parse_response(line: &str) -> Option<DecompositionResponse> {
    let r: DecompositionResponse = serde_json::from_str(line.trim()).ok()?;
    (!r.attribute.trim().is_empty() && !r.action.trim().is_empty()).then(|| DecompositionResponse {
        attribute: r.attribute.trim().to_string(),
        action: r.action.trim().to_string(),
    })
}

/// Client answer when usable, the rule-based split otherwise. Never fails.
pub fn decompose_query(q: &QueryRecord, client: Option<&dyn DecompositionClient>) -> SubQueryPair {
    if let Some(c) = client {
        let request = DecompositionRequest {
            query_id: q.query_id.clone(),
            text: q.text.clone(),
            instruction_template_id: INSTRUCTION_TEMPLATE_ID.into(),
        };
        match c.call(&request) {
            Ok(line) => match parse_response(&line) {
                Some(r) => {
                    return SubQueryPair {
                        attribute_text: r.attribute,
                        action_text: r.action,
                        provenance: c.provenance(),
                    }
                }
                None => warn!("query {}: malformed decomposition response, using fallback", q.query_id),
            },
            Err(e) => warn!("query {}: decomposition client failed ({e}), using fallback", q.query_id),
        }
    }
    fallback_decomposition(&q.text)
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "his", "her", "their", "its", "my", "your", "our", "some",
    "each", "every", "another", "two", "three", "four", "many", "several", "other",
];

const PREPOSITIONS: &[&str] = &[
    "on", "in", "of", "with", "at", "to", "near", "behind", "beside", "next", "under", "over", "from", "by", "wearing",
    "holding", "who", "that", "which", "whose", "whom", "and", "dressed", "in", "inside", "outside", "between", "around",
];

const RELATIVES: &[&str] = &["who", "which", "that", "whom", "whose"];

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "has", "have", "had", "does", "did", "do", "can", "could", "will", "would", "should",
    "may", "might", "must",
];

const IRREGULAR_PAST: &[&str] = &[
    "went", "came", "took", "stood", "sat", "ran", "held", "gave", "fell", "rose", "threw", "caught", "ate", "drank",
    "spoke", "saw", "brought", "bought", "found", "made", "met", "led", "lay", "knelt", "shook", "got", "began",
    "left", "put", "hit", "turned", "kept", "told", "said", "hid", "drove", "rode", "swam", "sang", "wrote", "woke",
];

const VERBS: &[&str] = &[
    "walk", "turn", "run", "stand", "sit", "look", "go", "come", "take", "put", "hold", "pick", "open", "close",
    "talk", "speak", "push", "pull", "hug", "kiss", "touch", "leave", "enter", "move", "jump", "dance", "eat",
    "drink", "throw", "catch", "raise", "lift", "grab", "give", "point", "wave", "nod", "shake", "follow", "chase",
    "ride", "drive", "climb", "fall", "lean", "stop", "step", "bend", "kneel", "lie", "carry", "play", "watch",
    "read", "write", "cry", "laugh", "smile", "answer", "ask", "hand", "pass", "reach", "return", "pat", "hit",
    "kick", "fight", "clap", "stare", "glance", "approach", "cross", "rise", "get", "put", "place", "drop", "hit",
    "fly", "swim", "sing", "wear", "bring", "lay", "lower", "squat", "slap", "punch", "hold", "start", "begin",
    "keep", "continue", "try", "see", "hear", "listen", "say", "tell", "show", "use", "wipe", "wash", "cut",
    "crawl", "roll", "spin", "rush", "hurry", "head", "lead", "hide", "appear", "disappear", "arrive", "exit",
];

fn normalize(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn is_known_verb(stem: &str) -> bool {
    VERBS.contains(&stem)
}

fn is_finite_verb(word: &str, prev: Option<&str>) -> bool {
    if prev.is_some_and(|p| DETERMINERS.contains(&p)) {
        return false;
    }
    if AUXILIARIES.contains(&word) || IRREGULAR_PAST.contains(&word) {
        return true;
    }
    let n = word.len();
    if let Some(stem) = word.strip_suffix("ies") {
        if is_known_verb(&format!("{stem}y")) {
            return true;
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if is_known_verb(stem) {
            return true;
        }
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !word.ends_with("ss") && is_known_verb(stem) {
            return true;
        }
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if is_known_verb(stem) || is_known_verb(&word[..n - 1]) {
            return true;
        }
        if let Some(s) = stem.strip_suffix('i') {
            if is_known_verb(&format!("{s}y")) {
                return true;
            }
        }
        let b = stem.as_bytes();
        if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] && is_known_verb(&stem[..stem.len() - 1]) {
            return true;
        }
    }
    false
}

/// Position of the main-clause finite verb, skipping one verb per relative clause.
fn main_verb(words: &[String]) -> Option<usize> {
    let mut pending_relative = false;
    for (i, w) in words.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| words[p].as_str());
        if RELATIVES.contains(&w.as_str()) && i > 0 && !prev.is_some_and(|p| PREPOSITIONS.contains(&p)) {
            pending_relative = true;
            continue;
        }
        if is_finite_verb(w, prev) {
            if pending_relative {
                pending_relative = false;
                continue;
            }
            return Some(i);
        }
    }
    None
}

/// Rule-based split; both parts are the full query when no split exists.
pub fn fallback_decomposition(text: &str) -> SubQueryPair {
    let raw: Vec<&str> = text.split_whitespace().collect();
    let words: Vec<String> = raw.iter().map(|w| normalize(w)).collect();
    let clean = |parts: &[&str]| {
        parts
            .join(" ")
            .trim_end_matches(|c: char| c.is_ascii_punctuation())
            .to_string()
    };
    let whole = clean(&raw);

    let split = main_verb(&words).filter(|i| *i > 0).map(|verb| {
        let subject_end = (1..verb)
            .find(|i| PREPOSITIONS.contains(&words[*i].as_str()) || raw[*i - 1].ends_with(','))
            .unwrap_or(verb);
        let attribute = clean(&raw[..verb]);
        let subject = clean(&raw[..subject_end]);
        let action = format!("{subject} {}", clean(&raw[verb..]));
        (attribute, action)
    });

    match split {
        Some((attribute, action)) if !attribute.is_empty() && !action.trim().is_empty() => SubQueryPair {
            attribute_text: attribute,
            action_text: action,
            provenance: Provenance::Fallback,
        },
        _ => SubQueryPair {
            attribute_text: whole.clone(),
            action_text: whole,
            provenance: Provenance::Fallback,
        },
    }
}
