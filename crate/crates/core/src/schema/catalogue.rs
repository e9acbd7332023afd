//! Reader for the `tables.json` schema catalogue shared by SPIDER and BIRD.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{ColumnDef, ColumnRef, DatabaseSchema, Descriptions, ForeignKey, SchemaError, TableDef};

#[derive(Debug, Error)]
pub enum CatalogueError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("database `{db}`: column index {index} out of range")]
    BadIndex { db: String, index: i64 },
    #[error("database `{db}`: {len} column names but {types} column types")]
    TypeCount { db: String, len: usize, types: usize },
    #[error("reading {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

#[derive(Debug, Deserialize)]
struct RawDatabase {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    foreign_keys: Vec<(i64, i64)>,
}

/// All databases of a benchmark, in file order.
#[derive(Debug, Clone, Default)]
pub struct Catalogue {
    databases: Vec<DatabaseSchema>,
    index: HashMap<String, usize>,
    rejected: Vec<(String, SchemaError)>,
}

impl Catalogue {
    pub fn from_schemas(schemas: impl IntoIterator<Item = DatabaseSchema>) -> Self {
        let mut cat = Catalogue::default();
        for db in schemas {
            cat.push(db);
        }
        cat
    }

    fn push(&mut self, db: DatabaseSchema) {
        self.index.insert(db.db_id().to_lowercase(), self.databases.len());
        self.databases.push(db);
    }

    pub fn get(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.index.get(&db_id.to_lowercase()).map(|&i| &self.databases[i])
    }

    pub fn get_mut(&mut self, db_id: &str) -> Option<&mut DatabaseSchema> {
        self.index.get(&db_id.to_lowercase()).map(|&i| &mut self.databases[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatabaseSchema> {
        self.databases.iter()
    }

    pub fn len(&self) -> usize {
        self.databases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.databases.is_empty()
    }

    /// Databases whose entries violated schema invariants and were skipped.
    pub fn rejected(&self) -> &[(String, SchemaError)] {
        &self.rejected
    }
}

pub fn read_catalogue(path: &Path) -> Result<Catalogue, CatalogueError> {
    let text = std::fs::read_to_string(path).map_err(|source| CatalogueError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_catalogue(&text).map_err(|e| match e {
        CatalogueError::Json { source, .. } => CatalogueError::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_catalogue(text: &str) -> Result<Catalogue, CatalogueError> {
    let raw: Vec<RawDatabase> = serde_json::from_str(text).map_err(|source| CatalogueError::Json {
        path: PathBuf::from("<memory>"),
        source,
    })?;
    let mut cat = Catalogue::default();
    for entry in raw {
        let db_id = entry.db_id.clone();
        match convert(entry)? {
            Ok(db) => cat.push(db),
            Err(err) => {
                log::warn!("skipping database `{db_id}`: {err}");
                cat.rejected.push((db_id, err));
            }
        }
    }
    Ok(cat)
}

fn convert(raw: RawDatabase) -> Result<Result<DatabaseSchema, SchemaError>, CatalogueError> {
    if raw.column_types.len() != raw.column_names_original.len() {
        return Err(CatalogueError::TypeCount {
            db: raw.db_id,
            len: raw.column_names_original.len(),
            types: raw.column_types.len(),
        });
    }
    let mut tables: Vec<TableDef> = raw
        .table_names_original
        .iter()
        .map(|name| TableDef::new(name.clone(), Vec::new()))
        .collect();
    // global column index -> (table index, column name)
    let mut global: HashMap<i64, (usize, String)> = HashMap::new();
    for (i, ((table_idx, name), col_type)) in raw.column_names_original.iter().zip(&raw.column_types).enumerate() {
        if *table_idx < 0 {
            continue;
        }
        let t = usize::try_from(*table_idx)
            .ok()
            .filter(|&t| t < tables.len())
            .ok_or(CatalogueError::BadIndex {
                db: raw.db_id.clone(),
                index: *table_idx,
            })?;
        tables[t].columns.push(ColumnDef::new(name.clone(), col_type.clone()));
        global.insert(i as i64, (t, name.clone()));
    }

    let mut foreign_keys = Vec::new();
    for (from, to) in &raw.foreign_keys {
        let lookup = |idx: &i64| {
            global
                .get(idx)
                .map(|(t, c)| ColumnRef::new(tables[*t].name.clone(), c.clone()))
                .ok_or(CatalogueError::BadIndex {
                    db: raw.db_id.clone(),
                    index: *idx,
                })
        };
        let fk = ForeignKey {
            from: lookup(from)?,
            to: lookup(to)?,
        };
        if !foreign_keys.contains(&fk) {
            foreign_keys.push(fk);
        }
    }
    Ok(DatabaseSchema::new(raw.db_id, tables, foreign_keys))
}

/// Reads BIRD per-table description CSVs from `dir` (one `<table>.csv` per
/// table). Missing files are skipped; undecodable bytes are replaced.
pub fn load_bird_descriptions(db: &DatabaseSchema, dir: &Path) -> Result<Descriptions, CatalogueError> {
    let mut out = Descriptions::new();
    for table in db.tables() {
        let path = dir.join(format!("{}.csv", table.name));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(source) => return Err(CatalogueError::Io { path, source }),
        };
        let text = String::from_utf8_lossy(&bytes);
        let text = text.trim_start_matches('\u{feff}');
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| CatalogueError::Csv {
                path: path.clone(),
                message: e.to_string(),
            })?
            .clone();
        let position = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let (Some(orig), desc, alt) = (
            position("original_column_name"),
            position("column_description"),
            position("column_name"),
        ) else {
            continue;
        };
        for record in reader.records() {
            let record = record.map_err(|e| CatalogueError::Csv {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let Some(column) = record.get(orig).map(str::trim) else {
                continue;
            };
            let text = desc
                .and_then(|i| record.get(i))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .or_else(|| alt.and_then(|i| record.get(i)).map(str::trim))
                .filter(|s| !s.is_empty());
            if let (Some(text), Some(col)) = (text, table.column(column)) {
                out.insert((table.name.to_lowercase(), col.name.to_lowercase()), text.to_string());
            }
        }
    }
    Ok(out)
}
