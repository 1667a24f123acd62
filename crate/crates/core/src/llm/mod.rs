//! Chat-completion client for OpenAI-compatible endpoints.

pub mod prompts;
pub mod transport;
pub mod verdict;

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{default_roles, Role};
pub use transport::{HttpTransport, MockTransport, Transport, TransportError};
pub use verdict::{parse_verdict, ReviewVerdict};

pub const API_KEY_ENV: &str = "PRISM_API_KEY";
pub const BASE_URL_ENV: &str = "PRISM_BASE_URL";
const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries {
        attempts: u32,
        status: Option<u16>,
        last: String,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("mock transcript has no entry matching the request")]
    NoMockMatch,
    #[error("endpoint config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LlmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Read from the environment only; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: &str, model_name: &str) -> Result<Self> {
        let cfg = Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_name: model_name.to_string(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `PRISM_BASE_URL` and `PRISM_API_KEY` when set.
    pub fn with_env(mut self) -> Result<Self> {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            self.base_url = url.trim_end_matches('/').to_string();
        }
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let rest = self
            .base_url
            .strip_prefix("http://")
            .or_else(|| self.base_url.strip_prefix("https://"))
            .ok_or_else(|| {
                LlmError::Config(format!(
                    "base url `{}` must start with http:// or https://",
                    self.base_url
                ))
            })?;
        if rest.is_empty() || rest.starts_with('/') {
            return Err(LlmError::Config(format!("base url `{}` has no host", self.base_url)));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("model name is empty".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub response_text: String,
    pub usage: Usage,
    pub attempts: u32,
}

/// Raw reply from a transport before retry bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReply {
    pub content: String,
    pub usage: Usage,
}

/// Shareable client; a 429 from any caller delays every caller.
pub struct Client {
    endpoint: EndpointConfig,
    transport: Arc<dyn Transport>,
    not_before: Mutex<Option<Instant>>,
}

impl Client {
    pub fn new(endpoint: EndpointConfig, transport: Arc<dyn Transport>) -> Self {
        Self {
            endpoint,
            transport,
            not_before: Mutex::new(None),
        }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatExchange> {
        let attempts_allowed = self.endpoint.max_retries + 1;
        let mut last = String::new();
        let mut last_status = None;
        for attempt in 0..attempts_allowed {
            self.wait_for_rate_limit();
            match self.transport.send(&self.endpoint, request) {
                Ok(reply) => {
                    return Ok(ChatExchange {
                        messages: request.messages.clone(),
                        temperature: request.temperature,
                        seed: request.seed,
                        response_text: reply.content,
                        usage: reply.usage,
                        attempts: attempt + 1,
                    })
                }
                Err(err) => {
                    if !err.is_transient() {
                        return Err(match err {
                            TransportError::Malformed(m) => LlmError::Malformed(m),
                            TransportError::NoMatch => LlmError::NoMockMatch,
                            TransportError::Status { code, body } => LlmError::Rejected { status: code, body },
                            other => LlmError::Malformed(other.to_string()),
                        });
                    }
                    last_status = err.status();
                    last = err.to_string();
                    log::warn!("attempt {} of {attempts_allowed} failed: {last}", attempt + 1);
                    if attempt + 1 < attempts_allowed {
                        let delay = self.backoff(attempt);
                        if err.status() == Some(429) {
                            let mut guard = self.not_before.lock().unwrap_or_else(|p| p.into_inner());
                            *guard = Some(Instant::now() + delay);
                        } else {
                            thread::sleep(delay);
                        }
                    }
                }
            }
        }
        Err(LlmError::ExhaustedRetries {
            attempts: attempts_allowed,
            status: last_status,
            last,
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.endpoint
            .backoff_base
            .saturating_mul(1u32 << attempt.min(16))
            .min(MAX_BACKOFF)
    }

    fn wait_for_rate_limit(&self) {
        let until = *self.not_before.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(until) = until {
            let now = Instant::now();
            if until > now {
                thread::sleep(until - now);
            }
        }
    }
}

/// Body of the first fenced code block that is not a verdict block, or the
/// whole reply when there is none.
pub fn extract_code(reply: &str) -> String {
    let mut in_block = false;
    let mut skip = false;
    let mut body = Vec::new();
    for line in reply.lines() {
        let trimmed = line.trim_start();
        if let Some(info) = trimmed.strip_prefix("```") {
            if in_block {
                if !skip {
                    return body.join("\n") + "\n";
                }
                in_block = false;
            } else {
                in_block = true;
                skip = info.trim() == "verdict";
                body.clear();
            }
            continue;
        }
        if in_block && !skip {
            body.push(line);
        }
    }
    reply.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        assert!(EndpointConfig::new("https://api.example.com/v1/", "m").is_ok());
        assert_eq!(
            EndpointConfig::new("http://h/v1/", "m").unwrap().completions_url(),
            "http://h/v1/chat/completions"
        );
        assert!(EndpointConfig::new("ftp://h", "m").is_err());
        assert!(EndpointConfig::new("http://", "m").is_err());
        assert!(EndpointConfig::new("http://h", "").is_err());
    }

    #[test]
    fn api_key_is_not_serialized() {
        let mut e = EndpointConfig::new("http://h", "m").unwrap();
        e.api_key = Some("secret".into());
        assert!(!serde_json::to_string(&e).unwrap().contains("secret"));
    }

    #[test]
    fn code_extraction() {
        assert_eq!(extract_code("intro\n```sh\necho hi\n```\nbye"), "echo hi\n");
        assert_eq!(extract_code("```verdict\nverdict: correct\n```\n```\nx\n```"), "x\n");
        assert_eq!(extract_code("plain answer"), "plain answer");
    }
}
