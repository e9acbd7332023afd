use std::time::Duration;

use serde_json::{json, Value};

use super::LlmConfig;

#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection failure, timeout, 429 or 5xx.
    Retryable(String),
    /// A well-formed refusal or an unusable response; retrying will not help.
    Fatal(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest<'_>) -> Result<ChatResponse, TransportError>;
}

/// OpenAI-style chat-completions over blocking HTTP.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &LlmConfig) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()?;
        Ok(Self {
            client,
            endpoint: cfg.endpoint.clone(),
            token: std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty()),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest<'_>) -> Result<ChatResponse, TransportError> {
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        parse_response(&text)
    }
}

fn snippet(text: &str) -> &str {
    let end = text.char_indices().nth(200).map_or(text.len(), |(i, _)| i);
    &text[..end]
}

fn parse_response(text: &str) -> Result<ChatResponse, TransportError> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| TransportError::Fatal(format!("response is not JSON: {e}")))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| TransportError::Fatal(format!("response has no message content: {}", snippet(text))))?;
    Ok(ChatResponse {
        content: content.to_string(),
        prompt_tokens: v["usage"]["prompt_tokens"].as_u64(),
        completion_tokens: v["usage"]["completion_tokens"].as_u64(),
    })
}
