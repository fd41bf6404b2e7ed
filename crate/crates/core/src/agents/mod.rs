//! Choice agents: something that looks at a rendered booking situation and
//! picks one of the numbered options.
//!
//! Two backends exist. [`remote::RemoteAgent`] sends the persona and scenario
//! prompts to a chat-completion endpoint. [`synthetic::SyntheticAgent`] is a
//! persona-conditioned logit model used as a verification oracle. Both map the
//! chosen position back through the presentation order to a semantic role.

pub mod cache;
pub mod rate_limit;
pub mod remote;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::personas::Segment;
use crate::scenario::{ChoiceScenario, OptionOrder, OptionRole};
use crate::seeding::hash_str;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Target,
    Competitor,
    Decoy,
    Invalid,
}

impl Choice {
    pub fn is_valid(self) -> bool {
        self != Choice::Invalid
    }
}

impl From<OptionRole> for Choice {
    fn from(role: OptionRole) -> Self {
        match role {
            OptionRole::Target => Choice::Target,
            OptionRole::Competitor => Choice::Competitor,
            OptionRole::Decoy => Choice::Decoy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub choice: Choice,
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    RemoteLlm,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub backend: Backend,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub cache_enabled: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            backend: Backend::Synthetic,
            model_name: "gpt-4o-mini".to_string(),
            temperature: 0.8,
            max_retries: 3,
            cache_enabled: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Everything an agent may look at for one decision.
#[derive(Debug, Clone, Copy)]
pub struct ChoiceRequest<'a> {
    pub segment: &'a Segment,
    pub scenario: &'a ChoiceScenario,
    pub system_prompt: &'a str,
    pub user_prompt: &'a str,
    pub order: &'a OptionOrder,
    /// Identifies the replication; part of the cache key and the sampling stream.
    pub sample_index: u64,
    /// [`prompt_digest`] of the two prompts, computed once per rendering.
    pub prompt_digest: u64,
}

impl ChoiceRequest<'_> {
    pub fn k_options(&self) -> usize {
        self.order.len()
    }
}

/// Cheap fingerprint of a prompt pair, used to key the synthetic sampling stream.
pub fn prompt_digest(system_prompt: &str, user_prompt: &str) -> u64 {
    hash_str(system_prompt) ^ hash_str(user_prompt).rotate_left(17)
}

pub trait ChoiceAgent: Send + Sync {
    fn choose(&self, request: &ChoiceRequest<'_>) -> Result<AgentResponse>;

    /// A short fingerprint of the agent's configuration, for run manifests.
    fn describe(&self) -> String;
}

/// First integer token in `raw` that lies in `1..=k`.
pub fn parse_choice(raw: &str, k: usize) -> Option<usize> {
    let mut chars = raw.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if !c.is_ascii_digit() {
            continue;
        }
        let mut end = start + c.len_utf8();
        while let Some(&(i, d)) = chars.peek() {
            if d.is_ascii_digit() {
                end = i + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        if let Ok(v) = raw[start..end].parse::<usize>() {
            if (1..=k).contains(&v) {
                return Some(v);
            }
        }
    }
    None
}

/// Maps a parsed 1-based position through the presentation order.
pub fn map_position(order: &OptionOrder, position: Option<usize>) -> Choice {
    position.and_then(|p| order.role_at(p)).map(Choice::from).unwrap_or(Choice::Invalid)
}
