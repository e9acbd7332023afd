#![allow(dead_code)]

pub mod metric_fixture;
pub mod oracle;
pub mod perturb;

use std::path::{Path, PathBuf};

use serde::Deserialize;
use unjoin_core::schema::{read_catalogue, Catalogue};

pub const DATABASES: [&str; 2] = ["bank", "school"];

/// Resolves from either crate of the workspace.
pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn catalogue() -> Catalogue {
    read_catalogue(&fixtures().join("spider/tables.json")).unwrap()
}

#[derive(Debug, Clone, Deserialize)]
pub struct GoldQuery {
    pub db_id: String,
    pub question: String,
    pub simplified: String,
    #[serde(rename = "final")]
    pub final_sql: String,
}

pub fn gold_queries() -> Vec<GoldQuery> {
    let text = std::fs::read_to_string(fixtures().join("gold_queries.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Debug, Clone, Deserialize)]
pub struct RefCase {
    pub db_id: String,
    pub sql: String,
    pub tables: Vec<String>,
    pub columns: Vec<String>,
}

pub fn ref_cases() -> Vec<RefCase> {
    let text = std::fs::read_to_string(fixtures().join("refs/expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Builds a SPIDER-layout root (tables.json, dev.json, database/<db>/<db>.sqlite)
/// from the committed scripts.
pub fn spider_root(dir: &Path) {
    let src = fixtures().join("spider");
    std::fs::copy(src.join("tables.json"), dir.join("tables.json")).unwrap();
    std::fs::copy(src.join("dev.json"), dir.join("dev.json")).unwrap();
    for db in DATABASES {
        let db_dir = dir.join("database").join(db);
        std::fs::create_dir_all(&db_dir).unwrap();
        build_sqlite(&db_dir.join(format!("{db}.sqlite")), db);
    }
}

pub fn build_sqlite(path: &Path, db: &str) {
    let script = std::fs::read_to_string(fixtures().join(format!("{db}.sql"))).unwrap();
    let conn = rusqlite::Connection::open(path).unwrap();
    conn.execute_batch(&script).unwrap();
}
