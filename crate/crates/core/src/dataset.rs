//! SPIDER / BIRD dev-set loading, multi-table filtering and run settings.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CacheMode, LlmConfig};
use crate::pipeline::{Method, DEFAULT_TOP_K};
use crate::schema::{load_bird_descriptions, read_catalogue, Catalogue, CatalogueError, Descriptions};
use crate::sqlref::extract_refs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    #[default]
    Spider,
    Bird,
}

impl Flavor {
    pub fn tables_file(self) -> &'static str {
        match self {
            Flavor::Spider => "tables.json",
            Flavor::Bird => "dev_tables.json",
        }
    }

    fn database_dir(self) -> &'static str {
        match self {
            Flavor::Spider => "database",
            Flavor::Bird => "dev_databases",
        }
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spider" => Ok(Flavor::Spider),
            "bird" => Ok(Flavor::Bird),
            _ => Err(format!("unknown dataset `{s}` (expected spider or bird)")),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Spider => "spider",
            Flavor::Bird => "bird",
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing(Vec<PathBuf>),
    #[error(transparent)]
    Catalogue(#[from] CatalogueError),
    #[error("parsing {path}: {message}")]
    Items { path: PathBuf, message: String },
    #[error("item {item} refers to unknown database `{db_id}`")]
    UnknownDb { item: String, db_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    /// `{db_id}:{index in the source file}`.
    pub id: String,
    pub db_id: String,
    pub question: String,
    pub gold_sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_table_count: Option<usize>,
}

impl EvalItem {
    /// The question as given to the model, with any evidence appended.
    pub fn prompt_question(&self, with_evidence: bool) -> String {
        match self.evidence.as_deref().map(str::trim).filter(|e| !e.is_empty()) {
            Some(e) if with_evidence => format!("{}\nEvidence: {e}", self.question.trim_end()),
            _ => self.question.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawItem {
    db_id: String,
    question: String,
    #[serde(alias = "SQL")]
    query: String,
    #[serde(default)]
    evidence: Option<String>,
}

#[derive(Debug)]
pub struct Dataset {
    pub flavor: Flavor,
    pub root: PathBuf,
    pub catalogue: Catalogue,
    pub items: Vec<EvalItem>,
}

impl Dataset {
    /// Path of a database file; existence is checked when it is opened.
    pub fn db_file(&self, db_id: &str) -> PathBuf {
        self.root
            .join(self.flavor.database_dir())
            .join(db_id)
            .join(format!("{db_id}.sqlite"))
    }

    /// BIRD column descriptions for `db_id`; `None` for SPIDER.
    pub fn descriptions(&self, db_id: &str) -> Result<Option<Descriptions>, CatalogueError> {
        if self.flavor != Flavor::Bird {
            return Ok(None);
        }
        let Some(db) = self.catalogue.get(db_id) else {
            return Ok(None);
        };
        let dir = self
            .root
            .join(self.flavor.database_dir())
            .join(db_id)
            .join("database_description");
        load_bird_descriptions(db, &dir).map(Some)
    }
}

pub fn load_dataset(root: &Path, flavor: Flavor) -> Result<Dataset, DatasetError> {
    let tables = root.join(flavor.tables_file());
    let dev = root.join("dev.json");
    let missing: Vec<PathBuf> = [&tables, &dev].into_iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(DatasetError::Missing(missing));
    }
    let catalogue = read_catalogue(&tables)?;
    let items = read_items(&dev)?;
    for item in &items {
        if catalogue.get(&item.db_id).is_none() {
            return Err(DatasetError::UnknownDb {
                item: item.id.clone(),
                db_id: item.db_id.clone(),
            });
        }
    }
    Ok(Dataset {
        flavor,
        root: root.to_path_buf(),
        catalogue,
        items,
    })
}

fn read_items(path: &Path) -> Result<Vec<EvalItem>, DatasetError> {
    let err = |message: String| DatasetError::Items {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let raw: Vec<RawItem> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| EvalItem {
            id: format!("{}:{i}", r.db_id),
            db_id: r.db_id,
            question: r.question,
            gold_sql: r.query,
            evidence: r.evidence,
            gold_table_count: None,
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct FilterResult {
    pub kept: Vec<EvalItem>,
    /// Items whose gold SQL could not be analysed, with the reason.
    pub dropped: Vec<(String, String)>,
}

impl FilterResult {
    pub fn database_count(&self) -> usize {
        self.kept
            .iter()
            .map(|i| i.db_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Keeps the items whose gold SQL references two or more tables, recording
/// each kept item's gold table count.
pub fn filter_items(items: &[EvalItem], catalogue: &Catalogue) -> FilterResult {
    let mut out = FilterResult::default();
    for item in items {
        let Some(db) = catalogue.get(&item.db_id) else {
            out.dropped
                .push((item.id.clone(), format!("unknown database `{}`", item.db_id)));
            continue;
        };
        match extract_refs(&item.gold_sql, db) {
            Ok(refs) if refs.tables.len() >= 2 => out.kept.push(EvalItem {
                gold_table_count: Some(refs.tables.len()),
                ..item.clone()
            }),
            Ok(_) => {}
            Err(e) => {
                log::warn!("dropping {}: gold SQL does not parse: {e}", item.id);
                out.dropped.push((item.id.clone(), e.to_string()));
            }
        }
    }
    out
}

/// Everything that determines a run. Serialized into every summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Flavor,
    pub root: PathBuf,
    pub method: Method,
    pub llm: LlmConfig,
    pub cache_mode: CacheMode,
    pub cache_dir: PathBuf,
    pub workers: usize,
    /// Open-book only: retrieved tables kept per question.
    pub top_k: usize,
    /// Open-book retrieval list (JSON lines); closed-book when absent.
    pub retrieval: Option<PathBuf>,
    pub template_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub exec_timeout_secs: u64,
    /// Append BIRD evidence to the question in every prompt.
    pub append_evidence: bool,
    /// Include BIRD column descriptions in simplified-schema blocks.
    pub use_descriptions: bool,
    /// Evaluate only the first N filtered items.
    pub limit: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: Flavor::Spider,
            root: PathBuf::from("data/spider"),
            method: Method::UnjoinMp,
            llm: LlmConfig::default(),
            cache_mode: CacheMode::Record,
            cache_dir: PathBuf::from("cache"),
            workers: 4,
            top_k: DEFAULT_TOP_K,
            retrieval: None,
            template_dir: None,
            out_dir: PathBuf::from("runs/latest"),
            exec_timeout_secs: 30,
            append_evidence: true,
            use_descriptions: true,
            limit: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("replay mode needs an existing cache directory, {0} does not exist")]
    ReplayWithoutCache(PathBuf),
    #[error("workers must be at least 1")]
    NoWorkers,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::Read {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cache_mode == CacheMode::Replay && !self.cache_dir.is_dir() {
            return Err(ConfigError::ReplayWithoutCache(self.cache_dir.clone()));
        }
        if self.workers == 0 {
            return Err(ConfigError::NoWorkers);
        }
        Ok(())
    }
}
