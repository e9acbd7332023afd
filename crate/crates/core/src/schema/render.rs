use std::fmt::Write;

use super::{DatabaseSchema, Descriptions, SimplifiedSchema};

const NAME_HEADER: &str = "Column Name";
const DESCRIPTION_HEADER: &str = "Description";

/// Renders the flattened schema as a two-column listing.
///
/// The first line names the virtual table. When at least one entry has a
/// description, a `Column Name / Description` title line follows and every
/// entry is padded to a common width; entries without a description carry
/// no trailing padding. Output has no trailing newline.
pub fn render_simplified(s: &SimplifiedSchema, descriptions: Option<&Descriptions>) -> String {
    let lookup = |table: &str, column: &str| -> Option<&str> {
        descriptions?
            .get(&(table.to_lowercase(), column.to_lowercase()))
            .map(String::as_str)
            .filter(|d| !d.trim().is_empty())
    };
    let any_description = s.entries().iter().any(|e| lookup(&e.table, &e.column).is_some());

    let width = s
        .entries()
        .iter()
        .map(|e| e.rendered.chars().count())
        .chain(std::iter::once(NAME_HEADER.len()))
        .max()
        .unwrap_or(0)
        + 2;

    let mut out = format!("Table: {}", s.virtual_table_name());
    if any_description {
        let _ = write!(out, "\n{NAME_HEADER:<width$}{DESCRIPTION_HEADER}");
    }
    for entry in s.entries() {
        out.push('\n');
        match lookup(&entry.table, &entry.column) {
            Some(text) => {
                let _ = write!(out, "{:<width$}{}", entry.rendered, one_line(text));
            }
            None => out.push_str(&entry.rendered),
        }
    }
    out
}

/// Renders the original schema as `CREATE TABLE` statements followed by one
/// `a.x = b.y` line per foreign key.
pub fn render_original(db: &DatabaseSchema) -> String {
    let mut out = String::new();
    for (i, table) in db.tables().iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "CREATE TABLE {} (", quote_ident(&table.name));
        let last = table.columns.len() - 1;
        for (j, column) in table.columns.iter().enumerate() {
            let sep = if j == last { "" } else { "," };
            let _ = write!(out, "  {} {}{}", quote_ident(&column.name), column.col_type, sep);
            if let Some(desc) = column.description.as_deref().filter(|d| !d.trim().is_empty()) {
                let _ = write!(out, " -- {}", one_line(desc));
            }
            out.push('\n');
        }
        out.push_str(");");
    }
    if !db.foreign_keys().is_empty() {
        out.push_str("\n\nForeign keys:");
        for fk in db.foreign_keys() {
            let _ = write!(
                out,
                "\n{}.{} = {}.{}",
                quote_ident(&fk.from.table),
                quote_ident(&fk.from.column),
                quote_ident(&fk.to.table),
                quote_ident(&fk.to.column)
            );
        }
    }
    out
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Backtick-quotes names that are not plain SQL identifiers.
pub(crate) fn quote_ident(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("`{}`", name.replace('`', "``"))
    }
}
