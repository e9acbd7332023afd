//! Run report files: `records.jsonl`, `summary.json` and `buckets.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::score::{EvalRecord, Summary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Self-description embedded in every summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_config: serde_json::Value,
    pub template_hashes: BTreeMap<String, String>,
    pub semantics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub metadata: RunMetadata,
    pub summary: Summary,
}

/// How the metrics in a summary were computed.
pub fn semantics() -> BTreeMap<String, String> {
    [
        ("qe", "prediction executes without runtime error; timeouts count as failures"),
        (
            "em",
            "rows compared as multisets (duplicates significant), as sequences when the gold query has ORDER BY; \
             numbers equal within 1e-6; text compared case-sensitively ignoring trailing whitespace; NULL equals only NULL",
        ),
        ("precision_recall", "per-query sets of tables and table.column references, macro-averaged over items"),
        ("rounding", "percentages rounded half-up to two decimals"),
        ("wall_time", "execution wall time is not recorded so that replayed runs are byte-identical"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn records_jsonl(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, ReportError> {
    let err = |message: String| ReportError::Read {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", n + 1))))
        .collect()
}

pub fn render_summary(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}
