//! Whole-run orchestration: load, filter, predict, execute, score, write.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::dataset::{filter_items, load_dataset, ConfigError, DatasetError, EvalItem, RunConfig};
use crate::llm::{CacheMode, ExchangeCache, LlmClient, LlmError, Transport};
use crate::metrics::{
    bucket_by_table_count, buckets_csv, evaluate, read_records, records_jsonl, render_summary, score_run, semantics,
    Bucket, EvalRecord, ReportError, RunMetadata, RunSummary, ScoreError,
};
use crate::pipeline::{assemble_pool, par_map, read_retrieval_file, run_method, ItemInput, MethodContext, PoolError};
use crate::prompting::{PromptError, TemplateSet};
use crate::schema::{CatalogueError, DatabaseSchema, Descriptions};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BUCKETS_FILE: &str = "buckets.csv";
pub const METADATA_FILE: &str = "run_meta.json";
pub const DROPPED_FILE: &str = "dropped.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Templates(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Descriptions(#[from] CatalogueError),
    #[error(transparent)]
    Retrieval(#[from] PoolError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("no items left after filtering")]
    NoItems,
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Metadata { path: PathBuf, message: String },
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub summary: RunSummary,
    pub buckets: Vec<Bucket>,
}

/// Runs `cfg` end to end over HTTP (or the cache) and writes the report.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    execute_run_with(cfg, None)
}

/// As [`execute_run`], with the model reached through `transport` instead
/// of HTTP when given.
pub fn execute_run_with(cfg: &RunConfig, transport: Option<Box<dyn Transport>>) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let templates = match &cfg.template_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let dataset = load_dataset(&cfg.root, cfg.dataset)?;
    let filtered = filter_items(&dataset.items, &dataset.catalogue);
    let mut items = filtered.kept;
    if let Some(n) = cfg.limit {
        items.truncate(n);
    }
    if items.is_empty() {
        return Err(RunError::NoItems);
    }
    log::info!(
        "{} items over {} databases ({} dropped)",
        items.len(),
        items
            .iter()
            .map(|i| &i.db_id)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        filtered.dropped.len()
    );

    let cache = (cfg.cache_mode != CacheMode::Live).then(|| ExchangeCache::new(&cfg.cache_dir));
    let client = match transport {
        Some(t) => LlmClient::new(cfg.llm.clone(), cfg.cache_mode, cache, t)?,
        None => LlmClient::http(cfg.llm.clone(), cfg.cache_mode, cache)?,
    };

    let mut descriptions: HashMap<String, Descriptions> = HashMap::new();
    if cfg.use_descriptions {
        for item in &items {
            if !descriptions.contains_key(&item.db_id) {
                if let Some(d) = dataset.descriptions(&item.db_id)? {
                    descriptions.insert(item.db_id.clone(), d);
                }
            }
        }
    }

    let retrieval = match &cfg.retrieval {
        Some(path) => Some(
            read_retrieval_file(path)?
                .into_iter()
                .map(|e| (e.question_id, e.tables))
                .collect::<HashMap<_, _>>(),
        ),
        None => None,
    };

    let ctx = MethodContext {
        templates: &templates,
        client: &client,
    };
    let timeout = Duration::from_secs(cfg.exec_timeout_secs);
    let records = par_map(&items, cfg.workers, |item: &EvalItem| {
        let db = dataset.catalogue.get(&item.db_id).expect("items resolve to databases");
        let pool;
        let (schema, descs): (&DatabaseSchema, Option<&Descriptions>) = match &retrieval {
            Some(lists) => {
                let retrieved = lists.get(&item.id).map(Vec::as_slice).unwrap_or_default();
                match assemble_pool(&item.id, retrieved, &dataset.catalogue, cfg.top_k) {
                    Ok(p) => {
                        pool = p;
                        (&pool.schema, None)
                    }
                    Err(e) => {
                        log::warn!("{}: cannot assemble table pool: {e}", item.id);
                        let empty = crate::pipeline::PredictedQuery::retrieval_failure(cfg.method, &e);
                        return evaluate(item, empty, db, &dataset.db_file(&item.db_id), timeout);
                    }
                }
            }
            None => (db, descriptions.get(&item.db_id)),
        };
        let question = item.prompt_question(cfg.append_evidence);
        let input = ItemInput {
            question: &question,
            db: schema,
            descriptions: descs,
        };
        let prediction = run_method(cfg.method, input, ctx);
        evaluate(item, prediction, schema, &dataset.db_file(&item.db_id), timeout)
    });

    let metadata = RunMetadata {
        run_config: serde_json::to_value(cfg).expect("config serializes"),
        template_hashes: templates.hashes(),
        semantics: semantics(),
    };
    let summary = RunSummary {
        summary: score_run(&records)?,
        metadata,
    };
    let buckets = bucket_by_table_count(&records);

    let out = &cfg.out_dir;
    write(out, RECORDS_FILE, &records_jsonl(&records))?;
    write(out, SUMMARY_FILE, &render_summary(&summary))?;
    write(out, BUCKETS_FILE, &buckets_csv(&buckets))?;
    write(
        out,
        METADATA_FILE,
        &(serde_json::to_string_pretty(&summary.metadata).expect("metadata serializes") + "\n"),
    )?;
    let dropped: Vec<_> = filtered
        .dropped
        .iter()
        .map(|(id, reason)| serde_json::json!({"item_id": id, "reason": reason}))
        .collect();
    write(
        out,
        DROPPED_FILE,
        &(serde_json::to_string_pretty(&dropped).expect("json") + "\n"),
    )?;

    Ok(RunOutput {
        records,
        summary,
        buckets,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|source| RunError::Write { path, source })
}

/// Recomputes the summary and buckets of a finished run from its records.
pub fn rescore(run_dir: &Path) -> Result<(RunSummary, Vec<Bucket>), RunError> {
    let records = read_records(&run_dir.join(RECORDS_FILE))?;
    let meta_path = run_dir.join(METADATA_FILE);
    let meta_err = |message: String| RunError::Metadata {
        path: meta_path.clone(),
        message,
    };
    let text = std::fs::read_to_string(&meta_path).map_err(|e| meta_err(e.to_string()))?;
    let metadata: RunMetadata = serde_json::from_str(&text).map_err(|e| meta_err(e.to_string()))?;
    let summary = RunSummary {
        summary: score_run(&records)?,
        metadata,
    };
    Ok((summary, bucket_by_table_count(&records)))
}
