//! Assigns a syntactic role to every token of a SQL string.
//!
//! This is deliberately a shallow state machine rather than a parser: model
//! output is often not parseable, and correction must still find the names.

use super::lexer::{Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Other,
    TableRef,
    /// Alias introduced for the table at `table_token` (a derived table when
    /// `None`).
    TableAlias {
        table_token: Option<usize>,
    },
    ColumnAlias,
    CteName,
    /// `q` in `q.col`; `column_token` is `None` for `q.*`.
    Qualifier {
        column_token: Option<usize>,
    },
    QualifiedColumn,
    Column,
}

const KEYWORDS: &[&str] = &[
    "abort",
    "action",
    "add",
    "after",
    "all",
    "alter",
    "always",
    "analyze",
    "and",
    "as",
    "asc",
    "attach",
    "autoincrement",
    "before",
    "begin",
    "between",
    "by",
    "cascade",
    "case",
    "cast",
    "check",
    "collate",
    "column",
    "commit",
    "conflict",
    "constraint",
    "create",
    "cross",
    "current",
    "current_date",
    "current_time",
    "current_timestamp",
    "database",
    "default",
    "deferrable",
    "deferred",
    "delete",
    "desc",
    "detach",
    "distinct",
    "do",
    "drop",
    "each",
    "else",
    "end",
    "escape",
    "except",
    "exclude",
    "exclusive",
    "exists",
    "explain",
    "fail",
    "false",
    "filter",
    "first",
    "following",
    "for",
    "foreign",
    "from",
    "full",
    "generated",
    "glob",
    "group",
    "groups",
    "having",
    "if",
    "ignore",
    "immediate",
    "in",
    "index",
    "indexed",
    "initially",
    "inner",
    "insert",
    "instead",
    "intersect",
    "into",
    "is",
    "isnull",
    "join",
    "key",
    "last",
    "left",
    "like",
    "limit",
    "match",
    "materialized",
    "natural",
    "no",
    "not",
    "nothing",
    "notnull",
    "null",
    "nulls",
    "of",
    "offset",
    "on",
    "or",
    "order",
    "others",
    "outer",
    "over",
    "partition",
    "plan",
    "pragma",
    "preceding",
    "primary",
    "query",
    "raise",
    "range",
    "recursive",
    "references",
    "regexp",
    "reindex",
    "release",
    "rename",
    "replace",
    "restrict",
    "returning",
    "right",
    "rollback",
    "row",
    "rows",
    "savepoint",
    "select",
    "set",
    "table",
    "temp",
    "temporary",
    "then",
    "ties",
    "to",
    "transaction",
    "trigger",
    "true",
    "unbounded",
    "union",
    "unique",
    "update",
    "using",
    "vacuum",
    "values",
    "view",
    "virtual",
    "when",
    "where",
    "window",
    "with",
    "without",
];

pub fn is_keyword(word: &str) -> bool {
    let lower = word.to_ascii_lowercase();
    KEYWORDS.binary_search(&lower.as_str()).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum From {
    Idle,
    ExpectTable,
    AfterTable(usize),
    AfterDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cte {
    Idle,
    ExpectName,
    AfterName,
    ExpectBody,
    AfterBody,
}

#[derive(Debug, Clone, Copy)]
struct State {
    from: From,
    in_from_clause: bool,
    in_select_list: bool,
    cte: Cte,
    cte_columns: bool,
}

impl Default for State {
    fn default() -> Self {
        Self {
            from: From::Idle,
            in_from_clause: false,
            in_select_list: false,
            cte: Cte::Idle,
            cte_columns: false,
        }
    }
}

#[derive(Debug)]
struct Frame {
    saved: State,
    function: Option<String>,
    derived: bool,
    cte_body: bool,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    TableAlias(Option<usize>),
    ColumnAlias,
    TypeName,
}

fn is_ident(t: &Token<'_>) -> bool {
    match t.kind {
        TokenKind::Word => !is_keyword(t.text),
        TokenKind::Quoted(_) => true,
        _ => false,
    }
}

fn ends_expression(t: &Token<'_>) -> bool {
    match t.kind {
        TokenKind::Number | TokenKind::String | TokenKind::Quoted(_) => true,
        TokenKind::Word => !is_keyword(t.text) || t.is_keyword("end") || t.is_keyword("null"),
        TokenKind::Punct => t.text == ")" || t.text == "*",
        _ => false,
    }
}

/// One role per token, aligned with `tokens`.
pub fn classify(tokens: &[Token<'_>]) -> Vec<Role> {
    let mut roles = vec![Role::Other; tokens.len()];
    let sig: Vec<usize> = (0..tokens.len()).filter(|&i| !tokens[i].is_trivia()).collect();
    let mut st = State::default();
    let mut stack: Vec<Frame> = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut skip_next = false;

    for p in 0..sig.len() {
        let i = sig[p];
        let t = &tokens[i];
        let next = sig.get(p + 1).map(|&j| &tokens[j]);
        let prev = p.checked_sub(1).map(|q| &tokens[sig[q]]);

        if roles[i] == Role::QualifiedColumn {
            continue;
        }
        if skip_next {
            skip_next = false;
            if is_ident(t) || t.kind == TokenKind::Word {
                continue;
            }
        }
        if let Some(pend) = pending.take() {
            if is_ident(t) {
                roles[i] = match pend {
                    Pending::TableAlias(table_token) => {
                        st.from = From::Idle;
                        Role::TableAlias { table_token }
                    }
                    Pending::ColumnAlias => Role::ColumnAlias,
                    Pending::TypeName => Role::Other,
                };
                continue;
            }
        }

        match t.kind {
            TokenKind::Word if is_keyword(t.text) => {
                let kw = t.text.to_ascii_lowercase();
                match kw.as_str() {
                    "from" => {
                        let in_function = stack.last().is_some_and(|f| f.function.is_some());
                        if !in_function {
                            st.from = From::ExpectTable;
                            st.in_from_clause = true;
                            st.in_select_list = false;
                        }
                    }
                    "join" => {
                        st.from = From::ExpectTable;
                        st.in_from_clause = true;
                    }
                    "with" => st.cte = Cte::ExpectName,
                    "as" => {
                        if st.cte == Cte::AfterName {
                            st.cte = Cte::ExpectBody;
                        } else if stack.last().and_then(|f| f.function.as_deref()) == Some("cast") {
                            pending = Some(Pending::TypeName);
                        } else {
                            pending = Some(match st.from {
                                From::AfterTable(tt) => Pending::TableAlias(Some(tt)),
                                From::AfterDerived => Pending::TableAlias(None),
                                _ => Pending::ColumnAlias,
                            });
                        }
                    }
                    "collate" => skip_next = true,
                    "select" => {
                        st.in_select_list = true;
                        st.in_from_clause = false;
                        st.from = From::Idle;
                        if st.cte == Cte::AfterBody {
                            st.cte = Cte::Idle;
                        }
                    }
                    "where" | "group" | "order" | "having" | "limit" | "union" | "intersect" | "except" | "window"
                    | "offset" | "values" => {
                        st.in_from_clause = false;
                        st.in_select_list = false;
                        st.from = From::Idle;
                    }
                    // join modifiers keep the clause open; JOIN itself re-arms it
                    "natural" | "left" | "right" | "full" | "inner" | "outer" | "cross" => {
                        st.from = From::Idle;
                    }
                    "on" | "using" => st.from = From::Idle,
                    _ => {}
                }
            }
            TokenKind::Punct => match t.text {
                "(" => {
                    let function = prev
                        .filter(|pt| pt.kind == TokenKind::Word && roles[sig[p - 1]] == Role::Other)
                        .filter(|pt| !is_keyword(pt.text) || pt.is_keyword("cast") || pt.is_keyword("replace"))
                        .filter(|_| st.cte != Cte::AfterName)
                        .map(|pt| pt.text.to_ascii_lowercase());
                    let derived = st.from == From::ExpectTable;
                    let cte_body = st.cte == Cte::ExpectBody;
                    let cte_columns = st.cte == Cte::AfterName;
                    stack.push(Frame {
                        saved: st,
                        function,
                        derived,
                        cte_body,
                    });
                    st = State {
                        cte_columns,
                        ..State::default()
                    };
                }
                ")" => {
                    if let Some(frame) = stack.pop() {
                        st = frame.saved;
                        if frame.derived {
                            st.from = From::AfterDerived;
                        }
                        if frame.cte_body {
                            st.cte = Cte::AfterBody;
                        }
                    }
                }
                "," => {
                    if st.cte == Cte::AfterBody {
                        st.cte = Cte::ExpectName;
                    } else if st.in_from_clause {
                        st.from = From::ExpectTable;
                    }
                }
                _ => {}
            },
            TokenKind::Word | TokenKind::Quoted(_) => {
                if st.cte == Cte::ExpectName {
                    roles[i] = Role::CteName;
                    st.cte = Cte::AfterName;
                    continue;
                }
                if st.cte_columns {
                    roles[i] = Role::ColumnAlias;
                    continue;
                }
                let next_is = |s: &str| next.is_some_and(|n| n.is_punct(s));
                if t.kind == TokenKind::Word && next_is("(") {
                    // function call
                    continue;
                }
                if next_is(".") {
                    let col = sig.get(p + 2).copied();
                    let col_tok = col.map(|j| &tokens[j]);
                    if let (Some(j), Some(ct)) = (col, col_tok) {
                        if st.from == From::ExpectTable {
                            // schema-qualified table name
                            if matches!(ct.kind, TokenKind::Word | TokenKind::Quoted(_)) {
                                roles[j] = Role::TableRef;
                                st.from = From::AfterTable(j);
                            }
                            continue;
                        }
                        if matches!(ct.kind, TokenKind::Word | TokenKind::Quoted(_)) {
                            roles[i] = Role::Qualifier { column_token: Some(j) };
                            roles[j] = Role::QualifiedColumn;
                            continue;
                        }
                        if ct.is_punct("*") {
                            roles[i] = Role::Qualifier { column_token: None };
                            continue;
                        }
                    }
                }
                match st.from {
                    From::ExpectTable => {
                        roles[i] = Role::TableRef;
                        st.from = From::AfterTable(i);
                    }
                    From::AfterTable(tt) => {
                        roles[i] = Role::TableAlias { table_token: Some(tt) };
                        st.from = From::Idle;
                    }
                    From::AfterDerived => {
                        roles[i] = Role::TableAlias { table_token: None };
                        st.from = From::Idle;
                    }
                    From::Idle => {
                        let implicit_alias = st.in_select_list
                            && prev.is_some_and(|pt| ends_expression(pt) && !pt.is_punct("*") || pt.is_punct(")"));
                        roles[i] = if implicit_alias {
                            Role::ColumnAlias
                        } else {
                            Role::Column
                        };
                    }
                }
            }
            _ => {}
        }
    }
    roles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::lexer::tokenize;

    fn roles_of(sql: &str) -> Vec<(String, Role)> {
        let toks = tokenize(sql);
        let roles = classify(&toks);
        toks.iter()
            .zip(roles)
            .filter(|(t, r)| *r != Role::Other && !t.is_trivia())
            .map(|(t, r)| (t.text.to_string(), r))
            .collect()
    }

    fn names(sql: &str, want: fn(&Role) -> bool) -> Vec<String> {
        roles_of(sql)
            .into_iter()
            .filter(|(_, r)| want(r))
            .map(|(t, _)| t)
            .collect()
    }

    #[test]
    fn keywords_are_sorted_for_binary_search() {
        assert!(KEYWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(is_keyword("FALSE") && is_keyword("select") && !is_keyword("count"));
    }

    #[test]
    fn tables_aliases_and_columns() {
        let sql = "SELECT T1.name, count(*) AS n FROM singer AS T1 JOIN concert c ON T1.id = c.sid WHERE age > 3";
        assert_eq!(names(sql, |r| *r == Role::TableRef), vec!["singer", "concert"]);
        assert_eq!(names(sql, |r| matches!(r, Role::TableAlias { .. })), vec!["T1", "c"]);
        assert_eq!(names(sql, |r| *r == Role::ColumnAlias), vec!["n"]);
        assert_eq!(names(sql, |r| *r == Role::Column), vec!["age"]);
        assert_eq!(names(sql, |r| *r == Role::QualifiedColumn), vec!["name", "id", "sid"]);
    }

    #[test]
    fn comma_joins_and_derived_tables() {
        let sql = "SELECT x FROM a, b AS bb, (SELECT y FROM c) AS d WHERE a.k IN (1, 2)";
        assert_eq!(names(sql, |r| *r == Role::TableRef), vec!["a", "b", "c"]);
        let aliases = roles_of(sql)
            .into_iter()
            .filter(|(_, r)| matches!(r, Role::TableAlias { .. }))
            .collect::<Vec<_>>();
        assert_eq!(aliases.len(), 2);
        assert_eq!(aliases[1], ("d".to_string(), Role::TableAlias { table_token: None }));
    }

    #[test]
    fn functions_casts_and_extract_are_not_names() {
        let sql = "SELECT CAST(amount AS REAL), strftime('%Y', date), SUBSTR(name FROM 2) FROM loan";
        assert_eq!(names(sql, |r| *r == Role::Column), vec!["amount", "date", "name"]);
        assert_eq!(names(sql, |r| *r == Role::TableRef), vec!["loan"]);
    }

    #[test]
    fn ctes_are_named_not_tables() {
        let sql = "WITH top(k, v) AS (SELECT a, b FROM t), other AS (SELECT 1) SELECT k FROM top JOIN other";
        assert_eq!(names(sql, |r| *r == Role::CteName), vec!["top", "other"]);
        assert_eq!(names(sql, |r| *r == Role::ColumnAlias), vec!["k", "v"]);
        assert_eq!(names(sql, |r| *r == Role::TableRef), vec!["t", "top", "other"]);
    }

    #[test]
    fn qualified_star_and_collate() {
        let sql = "SELECT T1.* FROM t AS T1 ORDER BY name COLLATE NOCASE";
        assert_eq!(
            roles_of(sql)[0],
            ("T1".to_string(), Role::Qualifier { column_token: None })
        );
        assert_eq!(names(sql, |r| *r == Role::Column), vec!["name"]);
    }

    #[test]
    fn implicit_column_alias() {
        let sql = "SELECT max(x) mx, y FROM t";
        assert_eq!(names(sql, |r| *r == Role::ColumnAlias), vec!["mx"]);
        assert_eq!(names(sql, |r| *r == Role::Column), vec!["x", "y"]);
    }
}
