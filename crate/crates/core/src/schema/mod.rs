//! Multi-table database schemas and their flattened single-table form.

mod catalogue;
mod render;
mod simplify;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalogue::{load_bird_descriptions, parse_catalogue, read_catalogue, Catalogue, CatalogueError};
pub use render::{render_original, render_simplified};
pub use simplify::{simplify_schema, SimplifiedColumn, SimplifiedSchema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("database `{db}`: duplicate table name `{table}`")]
    DuplicateTable { db: String, table: String },
    #[error("database `{db}`: table `{table}` has duplicate column `{column}`")]
    DuplicateColumn { db: String, table: String, column: String },
    #[error("database `{db}`: table name must be non-empty")]
    EmptyTableName { db: String },
    #[error("database `{db}`: table `{table}` has no columns")]
    NoColumns { db: String, table: String },
    #[error("database `{db}`: foreign key endpoint `{endpoint}` does not exist")]
    DanglingForeignKey { db: String, endpoint: String },
    #[error("database `{db}`: qualified name `{rendered}` produced by both {first} and {second}")]
    QualifiedCollision {
        db: String,
        rendered: String,
        first: String,
        second: String,
    },
}

/// A `(table, column)` pair in original casing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub col_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, col_type: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            col_type: col_type.into(),
            description: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Self {
        Self {
            name: name.into(),
            columns,
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

/// Per-column description text keyed by lowercase `(table, column)`.
pub type Descriptions = BTreeMap<(String, String), String>;

/// The original multi-table schema of one database.
///
/// Construction through [`DatabaseSchema::new`] enforces case-insensitive
/// uniqueness of table and column names and that every foreign key
/// endpoint exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatabaseSchema {
    db_id: String,
    tables: Vec<TableDef>,
    foreign_keys: Vec<ForeignKey>,
}

impl DatabaseSchema {
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<TableDef>,
        foreign_keys: Vec<ForeignKey>,
    ) -> Result<Self, SchemaError> {
        let db_id = db_id.into();
        let mut seen_tables = HashSet::new();
        for table in &tables {
            if table.name.is_empty() {
                return Err(SchemaError::EmptyTableName { db: db_id });
            }
            if !seen_tables.insert(table.name.to_lowercase()) {
                return Err(SchemaError::DuplicateTable {
                    db: db_id,
                    table: table.name.clone(),
                });
            }
            if table.columns.is_empty() {
                return Err(SchemaError::NoColumns {
                    db: db_id,
                    table: table.name.clone(),
                });
            }
            let mut seen_columns = HashSet::new();
            for column in &table.columns {
                if !seen_columns.insert(column.name.to_lowercase()) {
                    return Err(SchemaError::DuplicateColumn {
                        db: db_id,
                        table: table.name.clone(),
                        column: column.name.clone(),
                    });
                }
            }
        }
        let schema = Self {
            db_id,
            tables,
            foreign_keys: Vec::new(),
        };
        for fk in &foreign_keys {
            for endpoint in [&fk.from, &fk.to] {
                if schema.column(&endpoint.table, &endpoint.column).is_none() {
                    return Err(SchemaError::DanglingForeignKey {
                        db: schema.db_id.clone(),
                        endpoint: endpoint.to_string(),
                    });
                }
            }
        }
        Ok(Self { foreign_keys, ..schema })
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn tables(&self) -> &[TableDef] {
        &self.tables
    }

    pub fn foreign_keys(&self) -> &[ForeignKey] {
        &self.foreign_keys
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table).and_then(|t| t.column(column))
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Descriptions carried on the column definitions themselves.
    pub fn descriptions(&self) -> Descriptions {
        let mut out = Descriptions::new();
        for table in &self.tables {
            for column in &table.columns {
                if let Some(text) = &column.description {
                    out.insert((table.name.to_lowercase(), column.name.to_lowercase()), text.clone());
                }
            }
        }
        out
    }

    /// Returns a copy with descriptions attached from `descriptions`.
    /// Existing descriptions are overwritten for matching keys.
    pub fn with_descriptions(mut self, descriptions: &Descriptions) -> Self {
        for table in &mut self.tables {
            let tkey = table.name.to_lowercase();
            for column in &mut table.columns {
                if let Some(text) = descriptions.get(&(tkey.clone(), column.name.to_lowercase())) {
                    column.description = Some(text.clone());
                }
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(names: &[&str]) -> Vec<ColumnDef> {
        names.iter().map(|n| ColumnDef::new(*n, "text")).collect()
    }

    #[test]
    fn rejects_duplicate_tables_case_insensitively() {
        let err = DatabaseSchema::new(
            "db",
            vec![TableDef::new("T", cols(&["a"])), TableDef::new("t", cols(&["b"]))],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateTable { .. }));
    }

    #[test]
    fn rejects_duplicate_columns() {
        let err = DatabaseSchema::new("db", vec![TableDef::new("t", cols(&["a", "A"]))], vec![]).unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateColumn { .. }));
    }

    #[test]
    fn rejects_empty_tables() {
        let err = DatabaseSchema::new("db", vec![TableDef::new("t", vec![])], vec![]).unwrap_err();
        assert!(matches!(err, SchemaError::NoColumns { .. }));
        let err = DatabaseSchema::new("db", vec![TableDef::new("", cols(&["a"]))], vec![]).unwrap_err();
        assert!(matches!(err, SchemaError::EmptyTableName { .. }));
    }

    #[test]
    fn rejects_dangling_foreign_key() {
        let err = DatabaseSchema::new(
            "db",
            vec![TableDef::new("t", cols(&["a"])), TableDef::new("u", cols(&["b"]))],
            vec![ForeignKey {
                from: ColumnRef::new("t", "a"),
                to: ColumnRef::new("u", "missing"),
            }],
        )
        .unwrap_err();
        assert_eq!(
            err,
            SchemaError::DanglingForeignKey {
                db: "db".into(),
                endpoint: "u.missing".into()
            }
        );
    }

    #[test]
    fn lookups_ignore_case() {
        let db = DatabaseSchema::new("db", vec![TableDef::new("Singer", cols(&["Name"]))], vec![]).unwrap();
        assert!(db.column("singer", "NAME").is_some());
        assert_eq!(db.column_count(), 1);
    }
}
