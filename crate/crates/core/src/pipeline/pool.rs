//! Open-book table pools: retrieved tables, possibly from several databases,
//! merged into one synthetic schema.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Catalogue, ColumnRef, DatabaseSchema, ForeignKey, SchemaError, TableDef};

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedTable {
    pub db_id: String,
    pub table_name: String,
    #[serde(default)]
    pub score: f64,
}

/// One line of a retrieval file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub question_id: String,
    pub tables: Vec<RetrievedTable>,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("retrieved table {db_id}.{table} is not in the catalogue")]
    UnknownTable { db_id: String, table: String },
    #[error("pool schema is invalid: {0}")]
    Schema(#[from] SchemaError),
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Where a pooled table came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTable {
    /// Name inside the pool, after collision renaming.
    pub name: String,
    pub db_id: String,
    pub table_name: String,
}

#[derive(Debug, Clone)]
pub struct TablePool {
    pub schema: DatabaseSchema,
    pub provenance: Vec<PoolTable>,
}

impl TablePool {
    /// Whether the pool holds `table` of `db_id` (under any pool name).
    pub fn contains(&self, db_id: &str, table: &str) -> bool {
        self.provenance
            .iter()
            .any(|p| p.db_id.eq_ignore_ascii_case(db_id) && p.table_name.eq_ignore_ascii_case(table))
    }
}

/// Builds a pool from the `top_k` highest-scoring retrieved tables. A name
/// already taken in the pool is renamed `name__dbid`.
pub fn assemble_pool(
    pool_id: &str,
    retrieved: &[RetrievedTable],
    catalogue: &Catalogue,
    top_k: usize,
) -> Result<TablePool, PoolError> {
    let mut ranked: Vec<&RetrievedTable> = retrieved.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut seen = HashSet::new();
    let mut taken: HashSet<String> = HashSet::new();
    let mut tables = Vec::new();
    let mut provenance = Vec::new();
    for r in ranked {
        if provenance.len() == top_k {
            break;
        }
        let unknown = || PoolError::UnknownTable {
            db_id: r.db_id.clone(),
            table: r.table_name.clone(),
        };
        let db = catalogue.get(&r.db_id).ok_or_else(unknown)?;
        let table = db.table(&r.table_name).ok_or_else(unknown)?;
        if !seen.insert((db.db_id().to_lowercase(), table.name.to_lowercase())) {
            continue;
        }
        let mut name = table.name.clone();
        if taken.contains(&name.to_lowercase()) {
            name = format!("{}__{}", table.name, db.db_id());
        }
        taken.insert(name.to_lowercase());
        tables.push(TableDef::new(name.clone(), table.columns.clone()));
        provenance.push(PoolTable {
            name,
            db_id: db.db_id().to_string(),
            table_name: table.name.clone(),
        });
    }

    let pool_name = |db_id: &str, table: &str| {
        provenance
            .iter()
            .find(|p| p.db_id == db_id && p.table_name.eq_ignore_ascii_case(table))
            .map(|p| p.name.clone())
    };
    let mut foreign_keys = Vec::new();
    let mut visited = HashSet::new();
    for db_id in provenance.iter().map(|p| p.db_id.as_str()) {
        if !visited.insert(db_id) {
            continue;
        }
        let db = catalogue.get(db_id).expect("resolved above");
        for fk in db.foreign_keys() {
            if let (Some(from), Some(to)) = (pool_name(db_id, &fk.from.table), pool_name(db_id, &fk.to.table)) {
                foreign_keys.push(ForeignKey {
                    from: ColumnRef::new(from, fk.from.column.clone()),
                    to: ColumnRef::new(to, fk.to.column.clone()),
                });
            }
        }
    }
    let schema = DatabaseSchema::new(pool_id, tables, foreign_keys)?;
    Ok(TablePool { schema, provenance })
}

/// Reads a JSON-lines retrieval file.
pub fn read_retrieval_file(path: &Path) -> Result<Vec<RetrievalEntry>, PoolError> {
    let text = std::fs::read_to_string(path).map_err(|e| PoolError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| PoolError::Read {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", n + 1),
            })
        })
        .collect()
}
