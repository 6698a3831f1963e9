//! Chat-completions compatible client with bounded retries, plus helpers
//! for scripting an in-process mock endpoint.
//!
//! Requests go to `POST {base_url}/chat/completions`. Server errors (5xx)
//! and transport failures are retried with exponential backoff; other 4xx
//! replies fail at once.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::http::{MockServer, Reply, Request};
use clawgui_core::digest::to_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointSpec {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub timeout_ms: u64,
    /// Retries after the first attempt; the default 2 allows 3 attempts.
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointSpec {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            auth_env: None,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 200,
        }
    }
}

impl EndpointSpec {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        if self.timeout_ms == 0 {
            errors.push(format!("{prefix}.timeout_ms must be positive"));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            errors.push(format!("{prefix}.base_url must be an http(s) URL"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Content {
    Text(String),
    Parts(Vec<ContentPart>),
}

impl Content {
    /// Concatenated text parts.
    pub fn text(&self) -> String {
        match self {
            Content::Text(s) => s.clone(),
            Content::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }

    pub fn image_urls(&self) -> Vec<&str> {
        match self {
            Content::Text(_) => Vec::new(),
            Content::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::ImageUrl { image_url } => Some(image_url.url.as_str()),
                    ContentPart::Text { .. } => None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Content,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: "system".into(), content: Content::Text(text.into()) }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: "user".into(), content: Content::Text(text.into()) }
    }

    pub fn user_with_image(text: impl Into<String>, image_url: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: Content::Parts(vec![
                ContentPart::ImageUrl { image_url: ImageUrl { url: image_url.into() } },
                ContentPart::Text { text: text.into() },
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyMessage {
    #[serde(default)]
    pub role: String,
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    #[serde(default)]
    pub index: u32,
    pub message: ReplyMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

impl ChatResponse {
    pub fn with_text(text: impl Into<String>) -> Self {
        Self {
            choices: vec![Choice {
                index: 0,
                message: ReplyMessage { role: "assistant".into(), content: Some(text.into()) },
            }],
        }
    }

    /// Content of the first choice.
    pub fn text(&self) -> Option<&str> {
        self.choices.first().and_then(|c| c.message.content.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("auth variable {0} is not set")]
    MissingAuth(String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: Box<EndpointError> },
}

/// A successful call with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: ChatResponse,
    pub retries: u32,
    pub request_digest: String,
    pub response_digest: String,
}

impl Completion {
    pub fn text(&self) -> &str {
        self.response.text().unwrap_or("")
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

pub struct EndpointClient {
    spec: EndpointSpec,
    agent: ureq::Agent,
    token: Option<String>,
}

impl EndpointClient {
    pub fn new(spec: EndpointSpec) -> Result<Self, EndpointError> {
        let token = match &spec.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EndpointError::MissingAuth(var.clone()))?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(spec.timeout_ms)).build();
        Ok(Self { spec, agent, token })
    }

    pub fn spec(&self) -> &EndpointSpec {
        &self.spec
    }

    fn attempt(&self, url: &str, body: &str) -> Result<(ChatResponse, String), EndpointError> {
        let mut req = self.agent.post(url).set("content-type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("authorization", &format!("Bearer {t}"));
        }
        match req.send_string(body) {
            Ok(r) => {
                let text = r.into_string().map_err(|e| EndpointError::Transport(e.to_string()))?;
                let parsed = serde_json::from_str(&text).map_err(|e| EndpointError::Decode(e.to_string()))?;
                Ok((parsed, text))
            }
            Err(ureq::Error::Status(status, r)) => {
                Err(EndpointError::Status { status, body: r.into_string().unwrap_or_default() })
            }
            Err(e) => Err(EndpointError::Transport(e.to_string())),
        }
    }

    /// Send `request`, retrying up to `retries` times on 5xx and transport
    /// errors with backoff `backoff_ms * 2^k`.
    pub fn call(&self, request: &ChatRequest) -> Result<Completion, EndpointError> {
        let body = serde_json::to_string(request).map_err(|e| EndpointError::Decode(e.to_string()))?;
        let request_digest = sha_hex(body.as_bytes());
        let url = format!("{}/chat/completions", self.spec.base_url.trim_end_matches('/'));
        let mut retries = 0;
        loop {
            match self.attempt(&url, &body) {
                Ok((response, text)) => {
                    let response_digest = sha_hex(text.as_bytes());
                    log::debug!("endpoint call req={request_digest} resp={response_digest} retries={retries}");
                    return Ok(Completion { response, retries, request_digest, response_digest });
                }
                Err(e) => {
                    let retryable = match &e {
                        EndpointError::Status { status, .. } => *status >= 500,
                        EndpointError::Transport(_) => true,
                        _ => false,
                    };
                    if !retryable {
                        return Err(e);
                    }
                    if retries >= self.spec.retries {
                        return Err(EndpointError::Exhausted { attempts: retries + 1, last: Box::new(e) });
                    }
                    let wait = self.spec.backoff_ms.saturating_mul(1 << retries.min(16));
                    log::warn!("endpoint call req={request_digest} failed ({e}); retry {} in {wait} ms", retries + 1);
                    std::thread::sleep(Duration::from_millis(wait));
                    retries += 1;
                }
            }
        }
    }
}

/// Serve a scripted chat endpoint. The script maps each request to reply
/// text, or to an HTTP status for a scripted failure.
pub fn serve_chat(
    mut script: impl FnMut(&ChatRequest) -> Result<String, u16> + Send + 'static,
) -> std::io::Result<MockServer> {
    MockServer::spawn(move |req: Request| {
        if req.method != "POST" || !req.path.ends_with("/chat/completions") {
            return Reply::json(404, &serde_json::json!({"error": "not found"}));
        }
        match serde_json::from_str::<ChatRequest>(&req.body) {
            Ok(chat) => match script(&chat) {
                Ok(text) => Reply::ok(&ChatResponse::with_text(text)),
                Err(status) => Reply::json(status, &serde_json::json!({"error": "scripted failure"})),
            },
            Err(e) => Reply::json(400, &serde_json::json!({"error": e.to_string()})),
        }
    })
}
