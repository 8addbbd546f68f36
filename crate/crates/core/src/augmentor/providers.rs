//! Generation and discriminator providers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AugmentationAction;
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};

/// Produces a candidate headline for a generative action.
pub trait Generator: Send + Sync {
    /// `attempt` counts from zero; deterministic mocks use it to vary output
    /// across retries.
    fn generate(&self, action: AugmentationAction, headline: &str, attempt: u32) -> Result<String>;
}

/// Scores semantic similarity of two headlines in `[0, 1]`.
pub trait Discriminator: Send + Sync {
    fn score(&self, base: &str, candidate: &str) -> Result<f64>;
}

/// System prompts per generative action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTemplates {
    pub reword: String,
    pub shift: String,
    pub negate: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            reword: "Please reword this headline for me, preserving the exact semantic meaning perfectly. \
                     Your returned headline should contain the exact information with no meaning added or \
                     subtracted, but just rephrased. Please generate the headline, and return only that with \
                     no other text. Thanks."
                .into(),
            shift: "Please modify this headline slightly, so it is about something related but different. \
                    If the headline is good news, ensure it remains good news, and if it is bad news, ensure \
                    it remains bad news. Please generate the headline, and return only that with no other \
                    text. Thanks."
                .into(),
            negate: "Please reword this headline for me such that the information is the same except that it \
                     now is about the opposite meaning. Please generate the headline, and return only that \
                     with no other text. Thanks."
                .into(),
        }
    }
}

impl PromptTemplates {
    pub fn system_prompt(&self, action: AugmentationAction) -> Result<&str> {
        match action {
            AugmentationAction::Re => Ok(&self.reword),
            AugmentationAction::S => Ok(&self.shift),
            AugmentationAction::N => Ok(&self.negate),
            AugmentationAction::Ra => Err(Error::invalid("Ra has no prompt")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Chat-completion request for one generative action: the action's system
/// prompt, then the headline in double quotes as the user turn.
pub fn chat_request(
    templates: &PromptTemplates,
    model: &str,
    temperature: f64,
    action: AugmentationAction,
    headline: &str,
) -> Result<ChatRequest> {
    Ok(ChatRequest {
        model: model.to_string(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: templates.system_prompt(action)?.to_string(),
            },
            ChatMessage {
                role: "user".into(),
                content: format!("\"{headline}\""),
            },
        ],
        temperature,
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

/// Trim whitespace and one layer of wrapping quotes.
pub fn clean_generation(raw: &str) -> String {
    let t = raw.trim();
    let t = t.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(t);
    t.trim().to_string()
}

#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    model: String,
    temperature: f64,
    templates: PromptTemplates,
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        temperature: f64,
        templates: PromptTemplates,
        api_key_env: Option<&str>,
        policy: RetryPolicy,
    ) -> Result<Self> {
        Ok(Self {
            url: url.into(),
            model: model.into(),
            temperature,
            templates,
            client: JsonClient::new(api_key_env, policy)?,
        })
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, action: AugmentationAction, headline: &str, _attempt: u32) -> Result<String> {
        let req = chat_request(&self.templates, &self.model, self.temperature, action, headline)?;
        let resp: ChatResponse = self.client.post(&self.url, &req)?;
        let first = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::Provider(format!("{}: response has no choices", self.url)))?;
        Ok(clean_generation(&first.message.content))
    }
}

#[derive(Serialize)]
struct DiscRequest<'a> {
    text_a: &'a str,
    text_b: &'a str,
}

#[derive(Deserialize)]
struct DiscResponse {
    score: f64,
}

#[derive(Debug, Clone)]
pub struct HttpDiscriminator {
    url: String,
    client: JsonClient,
}

impl HttpDiscriminator {
    pub fn new(url: impl Into<String>, api_key_env: Option<&str>, policy: RetryPolicy) -> Result<Self> {
        Ok(Self {
            url: url.into(),
            client: JsonClient::new(api_key_env, policy)?,
        })
    }
}

impl Discriminator for HttpDiscriminator {
    fn score(&self, base: &str, candidate: &str) -> Result<f64> {
        let resp: DiscResponse = self.client.post(
            &self.url,
            &DiscRequest {
                text_a: base,
                text_b: candidate,
            },
        )?;
        if !(0.0..=1.0).contains(&resp.score) {
            return Err(Error::Provider(format!(
                "{}: discriminator score {} outside [0, 1]",
                self.url, resp.score
            )));
        }
        Ok(resp.score)
    }
}

/// Marker the mock generator puts in front of negated headlines.
pub const MOCK_NEGATION_MARKER: &str = "NEG:";

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..4])
}

/// Offline generator with deterministic string edits:
/// `Re` rotates the word order, `S` replaces the last quarter (rounded up)
/// of the words with derived tokens, `N` prefixes [`MOCK_NEGATION_MARKER`].
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    seed: u64,
}

impl MockGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Generator for MockGenerator {
    fn generate(&self, action: AugmentationAction, headline: &str, attempt: u32) -> Result<String> {
        let words: Vec<&str> = headline.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::invalid("cannot augment an empty headline"));
        }
        let out = match action {
            AugmentationAction::Re => {
                let k = (1 + attempt as usize) % words.len();
                let mut w = words.clone();
                w.rotate_left(k);
                w.join(" ")
            }
            AugmentationAction::S => {
                let r = words.len().div_ceil(4);
                let keep = words.len() - r;
                let mut w: Vec<String> = words[..keep].iter().map(|s| s.to_string()).collect();
                for (i, old) in words[keep..].iter().enumerate() {
                    w.push(format!(
                        "x{}",
                        short_hash(&[
                            &self.seed.to_le_bytes(),
                            old.as_bytes(),
                            &(i as u64).to_le_bytes(),
                            &attempt.to_le_bytes(),
                        ])
                    ));
                }
                w.join(" ")
            }
            AugmentationAction::N => format!("{MOCK_NEGATION_MARKER} {headline}"),
            AugmentationAction::Ra => return Err(Error::invalid("Ra is not generated")),
        };
        Ok(out)
    }
}

/// Offline discriminator: Jaccard overlap of lowercase word sets, scaled by
/// 0.3 when exactly one side carries the negation marker.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDiscriminator;

impl Discriminator for MockDiscriminator {
    fn score(&self, base: &str, candidate: &str) -> Result<f64> {
        use std::collections::BTreeSet;
        let tokens = |t: &str| -> (BTreeSet<String>, bool) {
            let mut neg = false;
            let set = t
                .split_whitespace()
                .filter(|w| {
                    if *w == MOCK_NEGATION_MARKER {
                        neg = true;
                        false
                    } else {
                        true
                    }
                })
                .map(str::to_lowercase)
                .collect();
            (set, neg)
        };
        let (a, neg_a) = tokens(base);
        let (b, neg_b) = tokens(candidate);
        let union = a.union(&b).count();
        let jaccard = if union == 0 {
            0.0
        } else {
            a.intersection(&b).count() as f64 / union as f64
        };
        let score = if neg_a != neg_b { 0.3 * jaccard } else { jaccard };
        Ok(score.clamp(0.0, 1.0))
    }
}
