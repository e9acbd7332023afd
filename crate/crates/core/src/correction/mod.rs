//! Edit-distance repair of table and column names in generated SQL.
//!
//! Only tokens classified as table or column references are ever touched.
//! Keywords, literals, function names, operators and the aliases a query
//! defines pass through byte for byte. An out-of-schema name is replaced by
//! the closest in-schema name when the case-insensitive Levenshtein distance
//! is within `max(2, ceil(0.4 * len(candidate)))`, or when one name is a
//! prefix abbreviation of the other (`disposition` -> `disp`).

mod classify;
mod distance;
pub mod lexer;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::schema::{DatabaseSchema, SimplifiedSchema};
pub use classify::{classify, Role};
pub use distance::{levenshtein_ci, max_distance};
use lexer::{Token, TokenKind};

/// Shortest name allowed to match by prefix abbreviation.
const MIN_ABBREVIATION: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub original: String,
    pub replacement: String,
    pub distance: usize,
    /// Byte offset of the token in the input SQL.
    pub position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub substitutions: Vec<Substitution>,
    pub unresolved: Vec<String>,
}

impl CorrectionReport {
    pub fn is_empty(&self) -> bool {
        self.substitutions.is_empty() && self.unresolved.is_empty()
    }
}

/// The names a query may legally use.
#[derive(Debug, Clone)]
pub struct CorrectionTarget {
    tables: Vec<TargetTable>,
}

#[derive(Debug, Clone)]
struct TargetTable {
    name: String,
    columns: Vec<String>,
}

impl CorrectionTarget {
    pub fn from_schema(db: &DatabaseSchema) -> Self {
        Self {
            tables: db
                .tables()
                .iter()
                .map(|t| TargetTable {
                    name: t.name.clone(),
                    columns: t.columns.iter().map(|c| c.name.clone()).collect(),
                })
                .collect(),
        }
    }

    /// Names valid in a query over the flattened table: the original table
    /// names as qualifiers with their columns, plus the virtual table whose
    /// columns are the rendered `Table.Column` names.
    pub fn from_simplified(s: &SimplifiedSchema) -> Self {
        let mut tables: Vec<TargetTable> = Vec::new();
        for e in s.entries() {
            match tables.iter_mut().find(|t| t.name == e.table) {
                Some(t) => t.columns.push(e.column.clone()),
                None => tables.push(TargetTable {
                    name: e.table.clone(),
                    columns: vec![e.column.clone()],
                }),
            }
        }
        if !tables
            .iter()
            .any(|t| t.name.eq_ignore_ascii_case(s.virtual_table_name()))
        {
            tables.push(TargetTable {
                name: s.virtual_table_name().to_string(),
                columns: s.entries().iter().map(|e| e.rendered.clone()).collect(),
            });
        }
        Self { tables }
    }

    fn table(&self, name: &str) -> Option<&TargetTable> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    fn has_column_anywhere(&self, name: &str) -> bool {
        self.tables
            .iter()
            .any(|t| t.columns.iter().any(|c| c.eq_ignore_ascii_case(name)))
    }
}

pub fn correct_identifiers(sql: &str, schema: &DatabaseSchema) -> (String, CorrectionReport) {
    correct_against(sql, &CorrectionTarget::from_schema(schema))
}

pub fn correct_identifiers_simplified(sql: &str, s: &SimplifiedSchema) -> (String, CorrectionReport) {
    correct_against(sql, &CorrectionTarget::from_simplified(s))
}

struct Candidate<'a> {
    name: &'a str,
    /// Belongs to (or is) a table the query already references.
    local: bool,
}

/// Picks the best replacement for `token`, or `None` when nothing is close
/// enough. Ties prefer names local to the query, then the smallest name.
fn best_match<'a>(token: &str, candidates: impl IntoIterator<Item = Candidate<'a>>) -> Option<(&'a str, usize)> {
    let lower = token.to_lowercase();
    let mut best: Option<(usize, bool, String, &'a str)> = None;
    for cand in candidates {
        let d = levenshtein_ci(token, cand.name);
        if d == 0 || !(d <= max_distance(cand.name) || is_abbreviation(&lower, &cand.name.to_lowercase())) {
            continue;
        }
        let key = (d, !cand.local, cand.name.to_lowercase(), cand.name);
        if best
            .as_ref()
            .is_none_or(|b| (key.0, key.1, &key.2, key.3) < (b.0, b.1, &b.2, b.3))
        {
            best = Some(key);
        }
    }
    best.map(|(d, _, _, name)| (name, d))
}

fn is_abbreviation(a: &str, b: &str) -> bool {
    let (short, long) = if a.chars().count() <= b.chars().count() {
        (a, b)
    } else {
        (b, a)
    };
    short.chars().count() >= MIN_ABBREVIATION && long.starts_with(short) && short != long
}

/// Repairs identifiers of `sql` against `target`. Idempotent: running it on
/// its own output changes nothing.
pub fn correct_against(sql: &str, target: &CorrectionTarget) -> (String, CorrectionReport) {
    let tokens = lexer::tokenize(sql);
    let roles = classify(&tokens);
    let mut report = CorrectionReport::default();
    let mut unresolved = BTreeSet::new();
    // token index -> replacement name
    let mut replace: HashMap<usize, (String, usize)> = HashMap::new();

    let value = |i: usize| tokens[i].ident_value().unwrap_or_default();
    let cte_names: BTreeSet<String> = roles
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, Role::CteName))
        .map(|(i, _)| value(i).to_lowercase())
        .collect();

    // 1. table references
    let mut resolved_tables: HashMap<usize, String> = HashMap::new();
    for (i, role) in roles.iter().enumerate() {
        if *role != Role::TableRef {
            continue;
        }
        let name = value(i);
        if cte_names.contains(&name.to_lowercase()) {
            continue;
        }
        if let Some(t) = target.table(&name) {
            resolved_tables.insert(i, t.name.clone());
            continue;
        }
        let cands = target.tables.iter().map(|t| Candidate {
            name: &t.name,
            local: false,
        });
        match best_match(&name, cands) {
            Some((rep, d)) => {
                replace.insert(i, (rep.to_string(), d));
                resolved_tables.insert(i, rep.to_string());
            }
            None => {
                unresolved.insert(name);
            }
        }
    }
    let referenced: BTreeSet<String> = resolved_tables.values().map(|t| t.to_lowercase()).collect();

    // 2. aliases defined by the query
    let mut table_aliases: HashMap<String, Option<String>> = HashMap::new();
    let mut column_aliases = BTreeSet::new();
    for (i, role) in roles.iter().enumerate() {
        match role {
            Role::TableAlias { table_token } => {
                let table = table_token.and_then(|t| resolved_tables.get(&t).cloned());
                table_aliases.insert(value(i).to_lowercase(), table);
            }
            Role::ColumnAlias => {
                column_aliases.insert(value(i).to_lowercase());
            }
            _ => {}
        }
    }

    let local_tables: Vec<&TargetTable> = target
        .tables
        .iter()
        .filter(|t| referenced.contains(&t.name.to_lowercase()))
        .collect();

    // 3. qualified and bare column references
    for (i, role) in roles.iter().enumerate() {
        match *role {
            Role::Qualifier { column_token } => {
                let q = value(i);
                let ql = q.to_lowercase();
                let table: Option<String> = if let Some(t) = table_aliases.get(&ql) {
                    t.clone()
                } else if let Some(t) = target.table(&q) {
                    Some(t.name.clone())
                } else if cte_names.contains(&ql) {
                    None
                } else {
                    let cands = target.tables.iter().map(|t| Candidate {
                        name: &t.name,
                        local: referenced.contains(&t.name.to_lowercase()),
                    });
                    match best_match(&q, cands) {
                        Some((rep, d)) => {
                            replace.insert(i, (rep.to_string(), d));
                            Some(rep.to_string())
                        }
                        None => {
                            unresolved.insert(q.clone());
                            None
                        }
                    }
                };
                let (Some(table), Some(column_token)) = (table.and_then(|t| target.table(&t)), column_token) else {
                    continue;
                };
                let col = value(column_token);
                if table.columns.iter().any(|c| c.eq_ignore_ascii_case(&col)) {
                    continue;
                }
                let cands = table.columns.iter().map(|c| Candidate { name: c, local: true });
                match best_match(&col, cands) {
                    Some((rep, d)) => {
                        replace.insert(column_token, (rep.to_string(), d));
                    }
                    None => {
                        unresolved.insert(format!("{q}.{col}"));
                    }
                }
            }
            Role::Column => {
                let name = value(i);
                let lower = name.to_lowercase();
                if column_aliases.contains(&lower)
                    || table_aliases.contains_key(&lower)
                    || cte_names.contains(&lower)
                    || target.has_column_anywhere(&name)
                    || target.table(&name).is_some()
                {
                    continue;
                }
                if matches!(tokens[i].kind, TokenKind::Quoted('"')) && !name.contains('.') {
                    // SQLite reads an unknown double-quoted bare name as a string
                    // literal; only flattened `Table.Column` names are repaired
                    continue;
                }
                let pool: Vec<&TargetTable> = if local_tables.is_empty() {
                    target.tables.iter().collect()
                } else {
                    local_tables.clone()
                };
                let cands = pool.iter().flat_map(|t| {
                    let local = referenced.contains(&t.name.to_lowercase());
                    t.columns.iter().map(move |c| Candidate { name: c, local })
                });
                match best_match(&name, cands) {
                    Some((rep, d)) => {
                        replace.insert(i, (rep.to_string(), d));
                    }
                    None => {
                        unresolved.insert(name);
                    }
                }
            }
            _ => {}
        }
    }

    let mut out = String::with_capacity(sql.len());
    for (i, tok) in tokens.iter().enumerate() {
        match replace.get(&i) {
            Some((rep, d)) => {
                out.push_str(&render_name(tok, rep));
                report.substitutions.push(Substitution {
                    original: tok.ident_value().unwrap_or_default(),
                    replacement: rep.clone(),
                    distance: *d,
                    position: tok.start,
                });
            }
            None => out.push_str(tok.text),
        }
    }
    report.unresolved = unresolved.into_iter().collect();
    (out, report)
}

/// Writes `name` in the token's quoting style, quoting bare words when the
/// name would not lex back as a single plain identifier.
fn render_name(tok: &Token<'_>, name: &str) -> String {
    match tok.kind {
        TokenKind::Quoted(open) => {
            let close = lexer::closing(open);
            let escaped = if close == ']' {
                name.to_string()
            } else {
                name.replace(close, &format!("{close}{close}"))
            };
            format!("{open}{escaped}{close}")
        }
        _ => {
            let plain = name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')
                && !classify::is_keyword(name);
            if plain {
                name.to_string()
            } else {
                format!("`{}`", name.replace('`', "``"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{simplify_schema, ColumnDef, TableDef};

    fn financial() -> DatabaseSchema {
        let t =
            |name: &str, cols: &[&str]| TableDef::new(name, cols.iter().map(|c| ColumnDef::new(*c, "text")).collect());
        DatabaseSchema::new(
            "financial",
            vec![
                t("account", &["account_id", "district_id", "frequency", "date"]),
                t("disp", &["disp_id", "client_id", "account_id", "type"]),
                t("client", &["client_id", "gender", "birth_date", "district_id"]),
                t("loan", &["loan_id", "account_id", "date", "amount", "status"]),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn disposition_becomes_disp() {
        let sql = "SELECT T1.client_id FROM disposition AS T1 JOIN client AS T2 ON T1.client_id = T2.client_id";
        let (out, report) = correct_identifiers(sql, &financial());
        assert_eq!(
            out,
            "SELECT T1.client_id FROM disp AS T1 JOIN client AS T2 ON T1.client_id = T2.client_id"
        );
        assert_eq!(report.substitutions.len(), 1);
        assert_eq!(report.substitutions[0].original, "disposition");
        assert_eq!(report.substitutions[0].replacement, "disp");
        assert_eq!(report.substitutions[0].distance, 7);
        assert_eq!(report.substitutions[0].position, 25);
    }

    #[test]
    fn valid_sql_is_a_fixed_point() {
        let sql = "SELECT count(*) FROM loan AS l JOIN account a ON l.account_id = a.account_id \
                   WHERE l.status = 'A' AND a.frequency LIKE \"POPLATEK%\" ORDER BY l.amount DESC LIMIT 3";
        let (out, report) = correct_identifiers(sql, &financial());
        assert_eq!(out, sql);
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn repairs_qualified_and_bare_columns() {
        let sql = "SELECT T1.gendr, birth_dat FROM client AS T1 WHERE T1.distrct_id = 5";
        let (out, report) = correct_identifiers(sql, &financial());
        assert_eq!(
            out,
            "SELECT T1.gender, birth_date FROM client AS T1 WHERE T1.district_id = 5"
        );
        assert_eq!(report.substitutions.len(), 3);
        let (again, report2) = correct_identifiers(&out, &financial());
        assert_eq!(again, out);
        assert!(report2.substitutions.is_empty());
    }

    #[test]
    fn aliases_and_literals_are_untouched() {
        let sql = "SELECT count(*) AS totl, x.amount FROM loan AS x WHERE x.status = 'statu' ORDER BY totl";
        let (out, report) = correct_identifiers(sql, &financial());
        assert_eq!(out, sql);
        assert!(report.substitutions.is_empty());
    }

    #[test]
    fn far_names_stay_unresolved() {
        let sql = "SELECT zzzzzz FROM loan";
        let (out, report) = correct_identifiers(sql, &financial());
        assert_eq!(out, sql);
        assert_eq!(report.unresolved, vec!["zzzzzz".to_string()]);
    }

    #[test]
    fn column_candidates_prefer_referenced_tables() {
        // `dat` is one edit from `date`, present in both account and loan;
        // only loan is referenced, and ties fall to it.
        let sql = "SELECT dat FROM loan";
        let (out, _) = correct_identifiers(sql, &financial());
        assert_eq!(out, "SELECT date FROM loan");
    }

    #[test]
    fn simplified_target_repairs_table_prefix() {
        let s = simplify_schema(&financial()).unwrap();
        let sql = "SELECT custmer.gender FROM financial WHERE clent.gender = 'F'";
        let (out, report) = correct_identifiers_simplified(sql, &s);
        assert_eq!(out, "SELECT custmer.gender FROM financial WHERE client.gender = 'F'");
        assert_eq!(report.unresolved, vec!["custmer".to_string()]);
        let sql = "SELECT client.gendr FROM financial";
        let (out, _) = correct_identifiers_simplified(sql, &s);
        assert_eq!(out, "SELECT client.gender FROM financial");
    }

    #[test]
    fn keyword_like_replacements_are_quoted() {
        let db = DatabaseSchema::new(
            "d",
            vec![TableDef::new(
                "t",
                vec![ColumnDef::new("order", "text"), ColumnDef::new("Free Meal", "text")],
            )],
            vec![],
        )
        .unwrap();
        let (out, _) = correct_identifiers("SELECT t.ordr, t.`Free Mael` FROM t", &db);
        assert_eq!(out, "SELECT t.`order`, t.`Free Meal` FROM t");
        let (again, r) = correct_identifiers(&out, &db);
        assert_eq!(again, out);
        assert!(r.is_empty());
    }
}
