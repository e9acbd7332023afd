use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::exec::{compare_results, execute, ExecOutcome};
use crate::dataset::EvalItem;
use crate::pipeline::{Method, PredictedQuery};
use crate::schema::DatabaseSchema;
use crate::sqlref::{extract_refs, has_order_by, RefSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub db_id: String,
    pub method: Method,
    pub gold_sql: String,
    pub prediction: PredictedQuery,
    pub gold: ExecOutcome,
    /// Absent when the method produced no SQL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<ExecOutcome>,
    pub qe: bool,
    pub em: bool,
    pub gold_refs: RefSet,
    pub pred_refs: RefSet,
    pub table_precision: f64,
    pub table_recall: f64,
    pub column_precision: f64,
    pub column_recall: f64,
    pub gold_table_count: usize,
}

/// Per-query precision and recall of `pred` against `gold`.
pub fn precision_recall(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> (f64, f64) {
    let hit = pred.intersection(gold).count() as f64;
    let precision = match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hit / pred.len() as f64,
    };
    let recall = if gold.is_empty() { 1.0 } else { hit / gold.len() as f64 };
    (precision, recall)
}

/// Executes gold and predicted SQL and scores one item. `schema` resolves
/// names for reference extraction; `db_file` is what both queries run on.
pub fn evaluate(
    item: &EvalItem,
    prediction: PredictedQuery,
    schema: &DatabaseSchema,
    db_file: &Path,
    timeout: Duration,
) -> EvalRecord {
    let gold = execute(&item.gold_sql, db_file, timeout);
    let pred = prediction
        .final_sql
        .as_deref()
        .map(|sql| execute(sql, db_file, timeout));
    let qe = pred.as_ref().is_some_and(ExecOutcome::is_ok);
    let em = qe
        && compare_results(
            &gold,
            pred.as_ref().expect("qe implies pred"),
            has_order_by(&item.gold_sql),
        );

    let gold_refs = extract_refs(&item.gold_sql, schema).unwrap_or_default();
    let pred_refs = prediction
        .final_sql
        .as_deref()
        .and_then(|sql| extract_refs(sql, schema).ok())
        .unwrap_or_default();
    let (table_precision, table_recall) = precision_recall(&pred_refs.tables, &gold_refs.tables);
    let (column_precision, column_recall) = precision_recall(&pred_refs.columns, &gold_refs.columns);

    EvalRecord {
        item_id: item.id.clone(),
        db_id: item.db_id.clone(),
        method: prediction.method,
        gold_sql: item.gold_sql.clone(),
        gold_table_count: item.gold_table_count.unwrap_or(gold_refs.tables.len()),
        prediction,
        gold,
        pred,
        qe,
        em,
        gold_refs,
        pred_refs,
        table_precision,
        table_recall,
        column_precision,
        column_recall,
    }
}

/// Percentages over a run, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub items: usize,
    pub qe: f64,
    pub em: f64,
    pub table_precision: f64,
    pub table_recall: f64,
    pub column_precision: f64,
    pub column_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no records to score")]
    Empty,
    #[error("record {0} has em without qe")]
    EmWithoutQe(String),
}

/// Rounds a fraction in [0, 1] to a percentage with two decimals, halves
/// away from zero. The nudge keeps exact halves from falling below the tie
/// through binary rounding error.
pub fn percent(fraction: f64) -> f64 {
    ((fraction * 10_000.0) + 1e-7).round() / 100.0
}

fn mean(records: &[EvalRecord], f: impl Fn(&EvalRecord) -> f64) -> f64 {
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

pub fn score_run(records: &[EvalRecord]) -> Result<Summary, ScoreError> {
    if records.is_empty() {
        return Err(ScoreError::Empty);
    }
    if let Some(bad) = records.iter().find(|r| r.em && !r.qe) {
        return Err(ScoreError::EmWithoutQe(bad.item_id.clone()));
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(Summary {
        items: records.len(),
        qe: percent(mean(records, |r| flag(r.qe))),
        em: percent(mean(records, |r| flag(r.em))),
        table_precision: percent(mean(records, |r| r.table_precision)),
        table_recall: percent(mean(records, |r| r.table_recall)),
        column_precision: percent(mean(records, |r| r.column_precision)),
        column_recall: percent(mean(records, |r| r.column_recall)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// `2`, `3`, `4` or `5+` (smaller counts keep their number).
    pub label: String,
    pub items: usize,
    pub table_recall: f64,
    pub column_recall: f64,
}

/// Mean table and column recall per gold table count, smallest first;
/// empty buckets are omitted.
pub fn bucket_by_table_count(records: &[EvalRecord]) -> Vec<Bucket> {
    let key = |n: usize| n.min(5);
    let mut keys: Vec<usize> = records.iter().map(|r| key(r.gold_table_count)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let members: Vec<EvalRecord> = records
                .iter()
                .filter(|r| key(r.gold_table_count) == k)
                .cloned()
                .collect();
            Bucket {
                label: if k == 5 { "5+".to_string() } else { k.to_string() },
                items: members.len(),
                table_recall: percent(mean(&members, |r| r.table_recall)),
                column_recall: percent(mean(&members, |r| r.column_recall)),
            }
        })
        .collect()
}

pub fn buckets_csv(buckets: &[Bucket]) -> String {
    let mut out = String::from("tables,items,table_recall,column_recall\n");
    for b in buckets {
        out.push_str(&format!(
            "{},{},{:.2},{:.2}\n",
            b.label, b.items, b.table_recall, b.column_recall
        ));
    }
    out
}
