//! Execution-based evaluation: QE, EM, reference precision/recall and
//! table-count buckets.

mod exec;
mod report;
mod score;

pub use exec::{compare_results, execute, Cell, ExecOutcome, ExecStatus, Row, DEFAULT_TIMEOUT, NUMERIC_TOLERANCE};
pub use report::{read_records, records_jsonl, render_summary, semantics, ReportError, RunMetadata, RunSummary};
pub use score::{
    bucket_by_table_count, buckets_csv, evaluate, percent, precision_recall, score_run, Bucket, EvalRecord, ScoreError,
    Summary,
};
