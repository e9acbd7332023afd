//! Chat-completion client with record/replay caching.

mod cache;
mod extract;
mod transport;

use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ExchangeCache, LlmExchange};
pub use extract::{extract_sql, extract_sql_blocks, ExtractError};
pub use transport::{ChatRequest, ChatResponse, HttpTransport, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Full URL of an OpenAI-style `chat/completions` endpoint.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 120,
            retries: 2,
            retry_backoff_ms: 1000,
            max_in_flight: 4,
            api_key_env: "UNJOIN_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits from the cache; call the model on a miss and store it.
    #[default]
    Record,
    /// Serve only from the cache; a miss is an error.
    Replay,
    /// Always call the model; the cache is neither read nor written.
    Live,
}

impl FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "live" => Ok(Self::Live),
            _ => Err(format!("unknown cache mode `{s}` (expected record, replay or live)")),
        }
    }
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Record => "record",
            Self::Replay => "replay",
            Self::Live => "live",
        })
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("replay cache has no exchange for key {key}")]
    ReplayMiss { key: CacheKey },
    #[error("cache mode {0} needs a cache directory")]
    NoCache(CacheMode),
    #[error("cache file {path}: {source}")]
    CacheIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache file {path} is corrupt: {message}")]
    CacheCorrupt { path: std::path::PathBuf, message: String },
}

/// Counting semaphore bounding requests in flight.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Shareable across worker threads.
pub struct LlmClient {
    cfg: LlmConfig,
    mode: CacheMode,
    cache: Option<ExchangeCache>,
    transport: Box<dyn Transport>,
    gate: Gate,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("cfg", &self.cfg)
            .field("mode", &self.mode)
            .field("cache", &self.cache)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(
        cfg: LlmConfig,
        mode: CacheMode,
        cache: Option<ExchangeCache>,
        transport: Box<dyn Transport>,
    ) -> Result<Self, LlmError> {
        if mode != CacheMode::Live && cache.is_none() {
            return Err(LlmError::NoCache(mode));
        }
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self {
            cfg,
            mode,
            cache,
            transport,
            gate,
        })
    }

    /// Client talking HTTP to `cfg.endpoint`.
    pub fn http(cfg: LlmConfig, mode: CacheMode, cache: Option<ExchangeCache>) -> Result<Self, LlmError> {
        let transport = HttpTransport::new(&cfg).map_err(|e| LlmError::Transport {
            attempts: 0,
            message: e.to_string(),
        })?;
        Self::new(cfg, mode, cache, Box::new(transport))
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let key = CacheKey::new(prompt, &self.cfg.model, self.cfg.temperature);
        if let (Some(cache), true) = (&self.cache, self.mode != CacheMode::Live) {
            if let Some(ex) = cache.get(&key)? {
                return Ok(ex.completion);
            }
            if self.mode == CacheMode::Replay {
                return Err(LlmError::ReplayMiss { key });
            }
        }

        let request = ChatRequest {
            model: &self.cfg.model,
            prompt,
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        let started = Instant::now();
        let response = {
            let _permit = self.gate.enter();
            self.send_with_retries(&request)?
        };
        let latency_ms = started.elapsed().as_millis() as u64;

        if let (Some(cache), CacheMode::Record) = (&self.cache, self.mode) {
            cache.put(&LlmExchange {
                key,
                model: self.cfg.model.clone(),
                temperature: self.cfg.temperature,
                prompt: prompt.to_string(),
                completion: response.content.clone(),
                latency_ms,
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
            })?;
        }
        Ok(response.content)
    }

    fn send_with_retries(&self, request: &ChatRequest<'_>) -> Result<ChatResponse, LlmError> {
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.transport.send(request) {
                Ok(r) => return Ok(r),
                Err(TransportError::Fatal(msg)) => return Err(LlmError::Rejected(msg)),
                Err(TransportError::Retryable(msg)) => {
                    log::warn!("llm attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                    if attempt < attempts && self.cfg.retry_backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(self.cfg.retry_backoff_ms * u64::from(attempt)));
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last,
        })
    }
}
