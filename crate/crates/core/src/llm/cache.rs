//! Content-addressed store of LLM exchanges, one JSON file per exchange.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

/// Hash of everything that determines a completion at a fixed temperature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(prompt: &str, model: &str, temperature: f64) -> Self {
        let canonical = serde_json::to_vec(&(prompt, model, temperature)).expect("tuple serializes");
        Self(hex::encode(Sha256::digest(&canonical)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub key: CacheKey,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub completion: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

#[derive(Debug)]
pub struct ExchangeCache {
    dir: PathBuf,
    writer: Mutex<()>,
}

impl ExchangeCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            writer: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.as_str()[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<LlmExchange>, LlmError> {
        let path = self.path_for(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(LlmError::CacheIo { path, source }),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| LlmError::CacheCorrupt {
                path,
                message: e.to_string(),
            })
    }

    /// Writes through a temporary file and a rename, one writer at a time,
    /// so readers never observe a partial exchange.
    pub fn put(&self, exchange: &LlmExchange) -> Result<(), LlmError> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.path_for(&exchange.key);
        let io = |source| LlmError::CacheIo {
            path: path.clone(),
            source,
        };
        let parent = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io)?;
        let json = serde_json::to_vec_pretty(exchange).expect("exchange serializes");
        tmp.write_all(&json).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }
}
