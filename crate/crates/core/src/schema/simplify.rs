use std::collections::HashMap;

use serde::Serialize;

use super::{ColumnRef, DatabaseSchema, SchemaError};

/// One column of the flattened table, with its provenance kept alongside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimplifiedColumn {
    pub table: String,
    pub column: String,
    pub rendered: String,
}

impl SimplifiedColumn {
    pub fn origin(&self) -> ColumnRef {
        ColumnRef::new(&self.table, &self.column)
    }
}

/// A database flattened into one virtual table whose columns are named
/// `TableName.ColumnName`.
///
/// Resolution back to the original `(table, column)` always goes through the
/// stored maps. Rendered names are never split on `.`, so tables or columns
/// whose names contain dots still resolve correctly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimplifiedSchema {
    virtual_table_name: String,
    entries: Vec<SimplifiedColumn>,
    #[serde(skip)]
    by_rendered: HashMap<String, usize>,
    #[serde(skip)]
    by_origin: HashMap<(String, String), usize>,
}

impl SimplifiedSchema {
    pub fn virtual_table_name(&self) -> &str {
        &self.virtual_table_name
    }

    pub fn entries(&self) -> &[SimplifiedColumn] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up an entry by its rendered `Table.Column` name (case-insensitive).
    pub fn resolve(&self, rendered: &str) -> Option<&SimplifiedColumn> {
        self.by_rendered
            .get(&rendered.to_lowercase())
            .map(|&i| &self.entries[i])
    }

    /// Looks up the entry standing for an original `(table, column)` pair.
    pub fn entry_for(&self, table: &str, column: &str) -> Option<&SimplifiedColumn> {
        self.by_origin
            .get(&(table.to_lowercase(), column.to_lowercase()))
            .map(|&i| &self.entries[i])
    }
}

/// Flattens `db` into a single virtual table named after the database.
///
/// Entries follow table order, then column order. Foreign keys are not
/// carried over. Fails only when two distinct `(table, column)` pairs render
/// to the same qualified name.
pub fn simplify_schema(db: &DatabaseSchema) -> Result<SimplifiedSchema, SchemaError> {
    let mut entries = Vec::with_capacity(db.column_count());
    let mut by_rendered: HashMap<String, usize> = HashMap::new();
    let mut by_origin = HashMap::new();

    for table in db.tables() {
        for column in &table.columns {
            let rendered = format!("{}.{}", table.name, column.name);
            let key = rendered.to_lowercase();
            if let Some(&prev) = by_rendered.get(&key) {
                let first: &SimplifiedColumn = &entries[prev];
                return Err(SchemaError::QualifiedCollision {
                    db: db.db_id().to_string(),
                    rendered,
                    first: format!("({}, {})", first.table, first.column),
                    second: format!("({}, {})", table.name, column.name),
                });
            }
            let idx = entries.len();
            by_rendered.insert(key, idx);
            by_origin.insert((table.name.to_lowercase(), column.name.to_lowercase()), idx);
            entries.push(SimplifiedColumn {
                table: table.name.clone(),
                column: column.name.clone(),
                rendered,
            });
        }
    }

    Ok(SimplifiedSchema {
        virtual_table_name: db.db_id().to_string(),
        entries,
        by_rendered,
        by_origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnDef, TableDef};
    use proptest::prelude::*;

    fn grid(tables: usize, columns: usize) -> DatabaseSchema {
        let tables = (0..tables)
            .map(|t| {
                TableDef::new(
                    format!("table{t}"),
                    (0..columns)
                        .map(|c| ColumnDef::new(format!("col{c}"), "number"))
                        .collect(),
                )
            })
            .collect();
        DatabaseSchema::new("grid", tables, vec![]).unwrap()
    }

    #[test]
    fn six_by_ten_gives_sixty() {
        let s = simplify_schema(&grid(6, 10)).unwrap();
        assert_eq!(s.len(), 60);
        assert_eq!(s.virtual_table_name(), "grid");
        assert_eq!(s.entries()[0].rendered, "table0.col0");
        assert_eq!(s.entries()[59].rendered, "table5.col9");
    }

    #[test]
    fn singleton() {
        let db = DatabaseSchema::new("d", vec![TableDef::new("t", vec![ColumnDef::new("c", "text")])], vec![]).unwrap();
        let s = simplify_schema(&db).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.entries()[0].rendered, "t.c");
        assert_eq!(s.resolve("t.c").unwrap().origin(), ColumnRef::new("t", "c"));
        assert_eq!(s.entry_for("T", "C").unwrap().rendered, "t.c");
    }

    #[test]
    fn dotted_names_resolve_through_map() {
        let db = DatabaseSchema::new(
            "d",
            vec![
                TableDef::new("a.b", vec![ColumnDef::new("c", "text")]),
                TableDef::new("x", vec![ColumnDef::new("y.z", "text")]),
            ],
            vec![],
        )
        .unwrap();
        let s = simplify_schema(&db).unwrap();
        assert_eq!(s.resolve("a.b.c").unwrap().origin(), ColumnRef::new("a.b", "c"));
        assert_eq!(s.resolve("x.y.z").unwrap().origin(), ColumnRef::new("x", "y.z"));
    }

    #[test]
    fn collision_is_reported() {
        let db = DatabaseSchema::new(
            "d",
            vec![
                TableDef::new("a.b", vec![ColumnDef::new("c", "text")]),
                TableDef::new("a", vec![ColumnDef::new("b.c", "text")]),
            ],
            vec![],
        )
        .unwrap();
        let err = simplify_schema(&db).unwrap_err();
        match err {
            SchemaError::QualifiedCollision { rendered, .. } => assert_eq!(rendered, "a.b.c"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_schema() -> impl Strategy<Value = DatabaseSchema> {
        prop::collection::vec(
            (
                "[a-z][a-z0-9_]{0,7}",
                prop::collection::btree_set("[a-z][a-z0-9_]{0,7}", 1..8),
            ),
            1..7,
        )
        .prop_filter_map("unique tables", |tables| {
            let defs = tables
                .into_iter()
                .map(|(name, cols)| TableDef::new(name, cols.into_iter().map(|c| ColumnDef::new(c, "text")).collect()))
                .collect();
            DatabaseSchema::new("prop", defs, vec![]).ok()
        })
    }

    proptest! {
        #[test]
        fn count_and_bijection(db in arb_schema()) {
            let s = simplify_schema(&db).unwrap();
            prop_assert_eq!(s.len(), db.column_count());
            let mut seen = std::collections::HashSet::new();
            for e in s.entries() {
                prop_assert_eq!(&e.rendered, &format!("{}.{}", e.table, e.column));
                prop_assert!(db.column(&e.table, &e.column).is_some());
                prop_assert!(seen.insert((e.table.clone(), e.column.clone())));
                prop_assert_eq!(s.resolve(&e.rendered), Some(e));
            }
            for t in db.tables() {
                for c in &t.columns {
                    prop_assert!(s.entry_for(&t.name, &c.name).is_some());
                }
            }
            prop_assert_eq!(simplify_schema(&db).unwrap(), s);
        }
    }
}
