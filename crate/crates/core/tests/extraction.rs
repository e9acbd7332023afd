mod common;

use serde::Deserialize;
use unjoin_core::llm::{extract_sql, extract_sql_blocks};

/// Hand-labelled completions in the shapes models tend to produce.
#[derive(Debug, Deserialize)]
struct Case {
    completion: String,
    sql: Option<String>,
    blocks: Vec<String>,
}

fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(common::fixtures().join("extraction.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn first_statement_matches_labels() {
    let cases = cases();
    assert_eq!(cases.len(), 20);
    for c in &cases {
        assert_eq!(extract_sql(&c.completion).ok(), c.sql, "{:?}", c.completion);
    }
}

#[test]
fn all_statements_match_labels() {
    for c in cases() {
        assert_eq!(extract_sql_blocks(&c.completion), c.blocks, "{:?}", c.completion);
    }
}
