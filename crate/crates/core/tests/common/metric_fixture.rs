//! The 25-record metric fixture and its oracle expectations.

use std::collections::BTreeSet;

use serde::Deserialize;
use unjoin_core::metrics::{precision_recall, Bucket, EvalRecord, ExecOutcome, ExecStatus, Summary};
use unjoin_core::pipeline::{Method, PredictedQuery};
use unjoin_core::sqlref::RefSet;

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureRecord {
    pub item_id: String,
    pub gold_tables: Vec<String>,
    pub gold_columns: Vec<String>,
    pub pred_tables: Vec<String>,
    pub pred_columns: Vec<String>,
    pub qe: bool,
    pub em: bool,
    pub gold_table_count: usize,
}

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub summary: Summary,
    pub buckets: Vec<Bucket>,
}

pub fn load<T: serde::de::DeserializeOwned>(name: &str) -> T {
    let text = std::fs::read_to_string(super::fixtures().join("metrics").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn ok_outcome() -> ExecOutcome {
    ExecOutcome {
        status: ExecStatus::Ok,
        rows: Some(Vec::new()),
        error: None,
        wall_ms: 0,
    }
}

pub fn to_record(f: &FixtureRecord) -> EvalRecord {
    let set = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>();
    let gold_refs = RefSet {
        tables: set(&f.gold_tables),
        columns: set(&f.gold_columns),
    };
    let pred_refs = RefSet {
        tables: set(&f.pred_tables),
        columns: set(&f.pred_columns),
    };
    let (table_precision, table_recall) = precision_recall(&pred_refs.tables, &gold_refs.tables);
    let (column_precision, column_recall) = precision_recall(&pred_refs.columns, &gold_refs.columns);
    EvalRecord {
        item_id: f.item_id.clone(),
        db_id: "fx".into(),
        method: Method::UnjoinMp,
        gold_sql: String::new(),
        prediction: PredictedQuery {
            method: Method::UnjoinMp,
            intermediate_sql: None,
            final_sql: None,
            simplified_correction: None,
            final_correction: None,
            completions: Vec::new(),
            failure: None,
        },
        gold: ok_outcome(),
        pred: f.qe.then(ok_outcome),
        qe: f.qe,
        em: f.em,
        gold_refs,
        pred_refs,
        table_precision,
        table_recall,
        column_precision,
        column_recall,
        gold_table_count: f.gold_table_count,
    }
}

pub fn fixture_records() -> Vec<EvalRecord> {
    load::<Vec<FixtureRecord>>("records.json")
        .iter()
        .map(to_record)
        .collect()
}
