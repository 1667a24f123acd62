use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use super::{ChatRequest, EndpointConfig, LlmError, RawReply, Usage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no matching transcript entry")]
    NoMatch,
}

impl TransportError {
    /// Rate limits, server errors, timeouts and connection failures are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Malformed(_) | TransportError::NoMatch => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            TransportError::Status { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<RawReply, TransportError>;
}

/// Blocking HTTP transport speaking the chat-completions wire format.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: &EndpointConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

pub fn request_body(endpoint: &EndpointConfig, request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": endpoint.model_name,
        "messages": request.messages,
        "temperature": request.temperature,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Pulls the first choice's content and the usage counts out of a response body.
pub fn parse_response(body: &Value) -> Result<RawReply, TransportError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
    let count = |key: &str| {
        body.pointer(&format!("/usage/{key}"))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    };
    Ok(RawReply {
        content: content.to_string(),
        usage: Usage {
            input_tokens: count("prompt_tokens"),
            output_tokens: count("completion_tokens"),
        },
    })
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &EndpointConfig, request: &ChatRequest) -> Result<RawReply, TransportError> {
        let mut builder = self
            .client
            .post(endpoint.completions_url())
            .json(&request_body(endpoint, request));
        if let Some(key) = &endpoint.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if !status.is_success() {
            return Err(TransportError::Status {
                code: status.as_u16(),
                body: text,
            });
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        parse_response(&body)
    }
}

fn classify(err: reqwest::Error) -> TransportError {
    if err.is_timeout() {
        TransportError::Timeout
    } else if err.is_connect() || err.is_request() {
        TransportError::Connect(err.to_string())
    } else if err.is_decode() || err.is_body() {
        TransportError::Malformed(err.to_string())
    } else {
        TransportError::Connect(err.to_string())
    }
}

/// One transcript line. An entry matches when every `match` substring occurs
/// in the concatenated message contents.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TranscriptEntry {
    #[serde(rename = "match", default)]
    pub patterns: Vec<String>,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub status: Option<u16>,
}

/// Offline transport replaying a JSONL transcript; the first matching entry wins.
#[derive(Debug, Clone)]
pub struct MockTransport {
    entries: Vec<TranscriptEntry>,
}

impl MockTransport {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { entries }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            entries.push(
                serde_json::from_str(line).map_err(|e| LlmError::Config(format!("transcript line {}: {e}", i + 1)))?,
            );
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text =
            fs::read_to_string(path).map_err(|e| LlmError::Config(format!("transcript {}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }
}

impl Transport for MockTransport {
    fn send(&self, _endpoint: &EndpointConfig, request: &ChatRequest) -> Result<RawReply, TransportError> {
        let haystack: String = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let entry = self
            .entries
            .iter()
            .find(|e| e.patterns.iter().all(|p| haystack.contains(p.as_str())))
            .ok_or(TransportError::NoMatch)?;
        if let Some(code) = entry.status.filter(|&c| c != 200) {
            return Err(TransportError::Status {
                code,
                body: entry.content.clone(),
            });
        }
        Ok(RawReply {
            content: entry.content.clone(),
            usage: Usage {
                input_tokens: entry.prompt_tokens,
                output_tokens: entry.completion_tokens,
            },
        })
    }
}
