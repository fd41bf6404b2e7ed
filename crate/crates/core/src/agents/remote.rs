//! Chat-completion backend.
//!
//! Each decision is one two-message chat: the persona as the system message,
//! the booking scenario as the user message, at the configured temperature.
//! No other generation parameters are sent. Transient transport failures
//! (network errors, HTTP 429 and 5xx) are retried with exponential backoff;
//! replies without a usable option number are re-asked within the same retry
//! budget and end up as [`Choice::Invalid`].

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cache::{request_key, CachedReply, ResponseCache};
use super::rate_limit::TokenBucket;
use super::{map_position, parse_choice, AgentConfig, AgentResponse, ChoiceAgent, ChoiceRequest};
use crate::error::{Error, Result};

pub const ENV_API_URL: &str = "DECOY_NUDGE_API_URL";
pub const ENV_API_KEY: &str = "DECOY_NUDGE_API_KEY";
pub const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";

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

impl ChatRequest {
    pub fn new(model: &str, temperature: f64, system: &str, user: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage { role: "system".into(), content: system.to_string() },
                ChatMessage { role: "user".into(), content: user.to_string() },
            ],
            temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    /// Worth retrying.
    Transient(String),
    /// Retrying will not help (bad key, malformed request).
    Fatal(String),
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure>;
}

/// OpenAI-compatible `chat/completions` client.
pub struct HttpTransport {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { endpoint: endpoint.into(), api_key: api_key.into(), agent }
    }

    /// Reads endpoint and key from the environment; the key is mandatory.
    pub fn from_env(timeout: Duration) -> Result<Self> {
        let key = std::env::var(ENV_API_KEY)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| Error::Config(format!("remote backend needs an API key in ${ENV_API_KEY}")))?;
        let url = std::env::var(ENV_API_URL).unwrap_or_else(|_| DEFAULT_API_URL.to_string());
        Ok(HttpTransport::new(url, key, timeout))
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> std::result::Result<String, TransportFailure> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| TransportFailure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportFailure::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => {
                let parsed: CompletionBody = serde_json::from_str(&body)
                    .map_err(|e| TransportFailure::Transient(format!("malformed completion: {e}")))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content.unwrap_or_default())
                    .ok_or_else(|| TransportFailure::Transient("completion without choices".into()))
            }
            408 | 409 | 429 | 500..=599 => Err(TransportFailure::Transient(format!("HTTP {status}: {body}"))),
            _ => Err(TransportFailure::Fatal(format!("HTTP {status}: {body}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    pub fn no_wait() -> Self {
        RetryPolicy { base_delay_ms: 0, max_delay_ms: 0 }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let ms = self.base_delay_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_delay_ms))
    }
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    key: &'a str,
    request: &'a ChatRequest,
    raw_text: &'a str,
    attempt_count: u32,
    cached: bool,
}

pub struct RemoteAgent {
    config: AgentConfig,
    transport: Arc<dyn ChatTransport>,
    cache: Option<Arc<ResponseCache>>,
    limiter: Option<Arc<TokenBucket>>,
    retry: RetryPolicy,
    audit: Option<Mutex<File>>,
}

impl RemoteAgent {
    pub fn new(config: AgentConfig, transport: Arc<dyn ChatTransport>) -> Result<Self> {
        config.validate()?;
        Ok(RemoteAgent { config, transport, cache: None, limiter: None, retry: RetryPolicy::default(), audit: None })
    }

    /// Ignored unless `cache_enabled` is set in the config.
    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        if self.config.cache_enabled {
            self.cache = Some(cache);
        }
        self
    }

    pub fn with_rate_limit(mut self, limiter: Arc<TokenBucket>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_audit_log(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(f));
        Ok(self)
    }

    pub fn cache(&self) -> Option<&Arc<ResponseCache>> {
        self.cache.as_ref()
    }

    /// Sends until a parseable reply arrives or the retry budget is spent.
    fn fetch(&self, chat: &ChatRequest, k: usize) -> Result<CachedReply> {
        let budget = self.config.max_retries + 1;
        let mut last_text = String::new();
        let mut last_err = None;
        for attempt in 0..budget {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.transport.send(chat) {
                Ok(text) => {
                    if parse_choice(&text, k).is_some() {
                        return Ok(CachedReply { key: String::new(), raw_text: text, attempt_count: attempt + 1 });
                    }
                    last_err = None;
                    last_text = text;
                }
                Err(TransportFailure::Fatal(msg)) => {
                    return Err(Error::Transport { attempts: attempt + 1, message: msg });
                }
                Err(TransportFailure::Transient(msg)) => last_err = Some(msg),
            }
        }
        match last_err {
            Some(message) => Err(Error::Transport { attempts: budget, message }),
            None => Ok(CachedReply { key: String::new(), raw_text: last_text, attempt_count: budget }),
        }
    }
}

impl ChoiceAgent for RemoteAgent {
    fn choose(&self, request: &ChoiceRequest<'_>) -> Result<AgentResponse> {
        let started = Instant::now();
        let k = request.k_options();
        let chat = ChatRequest::new(&self.config.model_name, self.config.temperature, request.system_prompt, request.user_prompt);
        let key = request_key(
            &self.config.model_name,
            self.config.temperature,
            request.system_prompt,
            request.user_prompt,
            &request.order.compact(),
            request.sample_index,
        );
        let (reply, cached) = match &self.cache {
            Some(cache) => cache.get_or_try_insert(&key, || self.fetch(&chat, k))?,
            None => (self.fetch(&chat, k)?, false),
        };
        if let Some(audit) = &self.audit {
            let rec = AuditRecord { key: &key, request: &chat, raw_text: &reply.raw_text, attempt_count: reply.attempt_count, cached };
            let mut line = serde_json::to_vec(&rec)?;
            line.push(b'\n');
            audit.lock().expect("audit log poisoned").write_all(&line)?;
        }
        let choice = map_position(request.order, parse_choice(&reply.raw_text, k));
        Ok(AgentResponse {
            choice,
            raw_text: reply.raw_text,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: if cached { 0 } else { reply.attempt_count },
        })
    }

    fn describe(&self) -> String {
        format!("remote:{}:t={}", self.config.model_name, self.config.temperature)
    }
}
