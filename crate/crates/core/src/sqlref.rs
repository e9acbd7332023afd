//! Table and column references of a SQL query.
//!
//! Names are resolved through aliases, derived tables and CTEs so that a
//! [`RefSet`] only ever holds base tables and base-qualified columns, in
//! lowercase. `SELECT *` expands to every column of the block's FROM tables;
//! `COUNT(*)` references no columns. Columns named in ON and USING clauses
//! are counted.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    Expr, GroupByExpr, Ident, JoinConstraint, JoinOperator, ObjectName, ObjectNamePart, OrderBy, OrderByKind, Query,
    Select, SelectItem, SelectItemQualifiedWildcardKind, SetExpr, Statement, TableFactor, TableWithJoins, Visit,
    Visitor,
};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;
use thiserror::Error;

use crate::schema::{DatabaseSchema, SimplifiedSchema};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("{message}")]
pub struct SqlParseError {
    pub message: String,
    /// Byte offset into the SQL text, when the parser reported a position.
    pub offset: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefSet {
    pub tables: BTreeSet<String>,
    pub columns: BTreeSet<String>,
}

impl RefSet {
    fn add_column(&mut self, table: &str, column: &str) {
        let table = table.to_lowercase();
        self.columns.insert(format!("{table}.{}", column.to_lowercase()));
        self.tables.insert(table);
    }
}

/// Result of [`extract_refs_detailed`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub refs: RefSet,
    /// Unqualified column names owned by more than one table in scope.
    pub ambiguous: Vec<String>,
}

/// References of a query written against a flattened schema, mapped back to
/// original tables and columns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifiedRefs {
    pub refs: RefSet,
    /// Dotted names that are not columns of the flattened schema.
    pub unresolved: Vec<String>,
}

pub fn parse_query(sql: &str) -> Result<Query, SqlParseError> {
    let statements = Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| {
        let message = e.to_string();
        let offset = error_offset(sql, &message).or_else(|| message.ends_with("found: EOF").then_some(sql.len()));
        SqlParseError { message, offset }
    })?;
    match statements.into_iter().next() {
        Some(Statement::Query(q)) => Ok(*q),
        Some(other) => Err(SqlParseError {
            message: format!("not a query: {}", first_word(&other.to_string())),
            offset: Some(0),
        }),
        None => Err(SqlParseError {
            message: "empty SQL".into(),
            offset: Some(0),
        }),
    }
}

fn first_word(s: &str) -> &str {
    s.split_whitespace().next().unwrap_or("")
}

/// Maps the parser's `Line: L, Column: C` suffix onto a byte offset.
fn error_offset(sql: &str, message: &str) -> Option<usize> {
    let after_line = &message[message.rfind("Line: ")? + 6..];
    let (line, rest) = after_line.split_once(',')?;
    let line: usize = line.trim().parse().ok()?;
    let column: usize = rest
        .trim()
        .strip_prefix("Column: ")?
        .chars()
        .take_while(char::is_ascii_digit)
        .collect::<String>()
        .parse()
        .ok()?;
    let line_start: usize = sql
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    let line_text = sql.get(line_start..)?;
    let within: usize = line_text
        .chars()
        .take(column.saturating_sub(1))
        .map(char::len_utf8)
        .sum();
    Some(line_start + within)
}

pub fn extract_refs(sql: &str, schema: &DatabaseSchema) -> Result<RefSet, SqlParseError> {
    extract_refs_detailed(sql, schema).map(|e| e.refs)
}

pub fn extract_refs_detailed(sql: &str, schema: &DatabaseSchema) -> Result<Extraction, SqlParseError> {
    let query = parse_query(sql)?;
    let mut walker = Walker {
        schema,
        refs: RefSet::default(),
        ambiguous: BTreeSet::new(),
        stack: Vec::new(),
    };
    walker.query(&query);
    Ok(Extraction {
        refs: walker.refs,
        ambiguous: walker.ambiguous.into_iter().collect(),
    })
}

/// True iff the query touches at least two distinct base tables.
pub fn is_multi_table(gold_sql: &str, schema: &DatabaseSchema) -> Result<bool, SqlParseError> {
    Ok(extract_refs(gold_sql, schema)?.tables.len() >= 2)
}

/// Whether the outermost query block carries an ORDER BY.
pub fn has_order_by(sql: &str) -> bool {
    match parse_query(sql) {
        Ok(q) => q
            .order_by
            .as_ref()
            .is_some_and(|o| !matches!(&o.kind, OrderByKind::Expressions(e) if e.is_empty())),
        Err(_) => sql
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .windows(2)
            .any(|w| w == ["order", "by"]),
    }
}

#[derive(Debug, Clone)]
enum RelKind {
    /// Lowercase base table name (may be absent from the schema).
    Base(String),
    Derived,
}

#[derive(Debug, Clone)]
struct Relation {
    alias: Option<String>,
    name: String,
    kind: RelKind,
}

#[derive(Debug, Default)]
struct Frame {
    relations: Vec<Relation>,
    ctes: Vec<String>,
}

struct Walker<'a> {
    schema: &'a DatabaseSchema,
    refs: RefSet,
    ambiguous: BTreeSet<String>,
    stack: Vec<Frame>,
}

impl Walker<'_> {
    fn query(&mut self, q: &Query) {
        let has_with = q.with.is_some();
        if let Some(with) = &q.with {
            self.stack.push(Frame::default());
            for cte in &with.cte_tables {
                let name = cte.alias.name.value.to_lowercase();
                if with.recursive {
                    self.top_mut().ctes.push(name.clone());
                }
                self.query(&cte.query);
                if !with.recursive {
                    self.top_mut().ctes.push(name);
                }
            }
        }
        self.set_expr(&q.body, q.order_by.as_ref());
        if has_with {
            self.stack.pop();
        }
    }

    fn top_mut(&mut self) -> &mut Frame {
        self.stack.last_mut().expect("frame pushed")
    }

    fn set_expr(&mut self, body: &SetExpr, order_by: Option<&OrderBy>) {
        match body {
            SetExpr::Select(select) => self.select(select, order_by),
            SetExpr::Query(q) => {
                self.query(q);
                self.order_by_outside(order_by);
            }
            SetExpr::SetOperation { left, right, .. } => {
                self.set_expr(left, order_by);
                self.set_expr(right, None);
            }
            SetExpr::Table(t) => {
                if let Some(name) = &t.table_name {
                    let rel = self.relation_for(name, None);
                    if let RelKind::Base(table) = rel.kind {
                        self.refs.tables.insert(table);
                    }
                }
            }
            _ => self.order_by_outside(order_by),
        }
    }

    /// ORDER BY items with no select block to bind to still get walked so
    /// their subqueries are seen.
    fn order_by_outside(&mut self, order_by: Option<&OrderBy>) {
        if let Some(OrderBy {
            kind: OrderByKind::Expressions(items),
            ..
        }) = order_by
        {
            for item in items {
                self.expr(&item.expr);
            }
        }
    }

    fn is_cte(&self, name: &str) -> bool {
        self.stack.iter().rev().any(|f| f.ctes.iter().any(|c| c == name))
    }

    fn relation_for(&self, name: &str, alias: Option<&Ident>) -> Relation {
        let lower = name.to_lowercase();
        let kind = if self.is_cte(&lower) {
            RelKind::Derived
        } else {
            RelKind::Base(
                self.schema
                    .table(name)
                    .map(|t| t.name.to_lowercase())
                    .unwrap_or_else(|| lower.clone()),
            )
        };
        Relation {
            alias: alias.map(|a| a.value.to_lowercase()),
            name: lower,
            kind,
        }
    }

    fn select(&mut self, select: &Select, order_by: Option<&OrderBy>) {
        let mut relations = Vec::new();
        let mut constraints = Vec::new();
        for twj in &select.from {
            self.table_with_joins(twj, &mut relations, &mut constraints);
        }
        for rel in &relations {
            if let RelKind::Base(t) = &rel.kind {
                self.refs.tables.insert(t.clone());
            }
        }
        self.stack.push(Frame {
            relations,
            ctes: Vec::new(),
        });

        for item in &select.projection {
            match item {
                SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => self.expr(e),
                SelectItem::ExprWithAliases { expr, .. } => self.expr(expr),
                SelectItem::Wildcard(_) => self.expand_all(),
                SelectItem::QualifiedWildcard(kind, _) => match kind {
                    SelectItemQualifiedWildcardKind::ObjectName(name) => {
                        if let Some(q) = last_part(name) {
                            self.expand_qualifier(&q);
                        }
                    }
                    SelectItemQualifiedWildcardKind::Expr(e) => self.expr(e),
                },
            }
        }
        for constraint in constraints {
            match constraint {
                Constraint::On(e) => self.expr(&e),
                Constraint::Using(cols) => {
                    for c in cols {
                        self.unqualified(&c);
                    }
                }
            }
        }
        if let Some(e) = &select.selection {
            self.expr(e);
        }
        if let GroupByExpr::Expressions(exprs, _) = &select.group_by {
            for e in exprs {
                self.expr(e);
            }
        }
        if let Some(e) = &select.having {
            self.expr(e);
        }
        if let Some(e) = &select.qualify {
            self.expr(e);
        }
        if let Some(OrderBy {
            kind: OrderByKind::Expressions(items),
            ..
        }) = order_by
        {
            for item in items {
                self.expr(&item.expr);
            }
        }
        self.stack.pop();
    }

    fn table_with_joins(
        &mut self,
        twj: &TableWithJoins,
        relations: &mut Vec<Relation>,
        constraints: &mut Vec<Constraint>,
    ) {
        self.table_factor(&twj.relation, relations, constraints);
        for join in &twj.joins {
            self.table_factor(&join.relation, relations, constraints);
            if let Some(c) = join_constraint(&join.join_operator) {
                match c {
                    JoinConstraint::On(e) => constraints.push(Constraint::On(Box::new(e.clone()))),
                    JoinConstraint::Using(cols) => {
                        constraints.push(Constraint::Using(cols.iter().filter_map(last_part).collect()))
                    }
                    JoinConstraint::Natural | JoinConstraint::None => {}
                }
            }
        }
    }

    fn table_factor(&mut self, factor: &TableFactor, relations: &mut Vec<Relation>, constraints: &mut Vec<Constraint>) {
        match factor {
            TableFactor::Table { name, alias, .. } => {
                if let Some(n) = last_part(name) {
                    relations.push(self.relation_for(&n, alias.as_ref().map(|a| &a.name)));
                }
            }
            TableFactor::Derived { subquery, alias, .. } => {
                self.query(subquery);
                relations.push(Relation {
                    alias: alias.as_ref().map(|a| a.name.value.to_lowercase()),
                    name: String::new(),
                    kind: RelKind::Derived,
                });
            }
            TableFactor::NestedJoin {
                table_with_joins,
                alias,
            } => {
                let start = relations.len();
                self.table_with_joins(table_with_joins, relations, constraints);
                if let Some(a) = alias {
                    // an aliased parenthesised join behaves like a derived table
                    relations.truncate(start);
                    relations.push(Relation {
                        alias: Some(a.name.value.to_lowercase()),
                        name: String::new(),
                        kind: RelKind::Derived,
                    });
                }
            }
            _ => {}
        }
    }

    fn expand_all(&mut self) {
        let Some(frame) = self.stack.last() else { return };
        let tables: Vec<String> = frame
            .relations
            .iter()
            .filter_map(|r| match &r.kind {
                RelKind::Base(t) => Some(t.clone()),
                RelKind::Derived => None,
            })
            .collect();
        for t in tables {
            self.expand_table(&t);
        }
    }

    fn expand_qualifier(&mut self, qualifier: &str) {
        if let Some(Relation {
            kind: RelKind::Base(t), ..
        }) = self.lookup_qualifier(qualifier)
        {
            self.expand_table(&t);
        }
    }

    fn expand_table(&mut self, table: &str) {
        if let Some(def) = self.schema.table(table) {
            for c in &def.columns {
                self.refs.add_column(&def.name, &c.name);
            }
        }
    }

    fn lookup_qualifier(&self, qualifier: &str) -> Option<Relation> {
        let q = qualifier.to_lowercase();
        for frame in self.stack.iter().rev() {
            if let Some(r) = frame.relations.iter().find(|r| r.alias.as_deref() == Some(q.as_str())) {
                return Some(r.clone());
            }
            if let Some(r) = frame.relations.iter().find(|r| r.alias.is_none() && r.name == q) {
                return Some(r.clone());
            }
            if let Some(r) = frame.relations.iter().find(|r| r.name == q) {
                return Some(r.clone());
            }
        }
        None
    }

    fn qualified(&mut self, qualifier: &str, column: &str) {
        match self.lookup_qualifier(qualifier) {
            Some(Relation {
                kind: RelKind::Base(table),
                ..
            }) => self.add_checked(&table, column),
            Some(_) => {}
            None => {
                if let Some(def) = self.schema.table(qualifier) {
                    let name = def.name.clone();
                    self.add_checked(&name, column);
                }
            }
        }
    }

    fn add_checked(&mut self, table: &str, column: &str) {
        let column = self
            .schema
            .column(table, column)
            .map(|c| c.name.clone())
            .unwrap_or_else(|| column.to_string());
        self.refs.add_column(table, &column);
    }

    fn unqualified(&mut self, column: &str) {
        for depth in (0..self.stack.len()).rev() {
            let owners: Vec<String> = self.stack[depth]
                .relations
                .iter()
                .filter_map(|r| match &r.kind {
                    RelKind::Base(t) if self.schema.column(t, column).is_some() => Some(t.clone()),
                    _ => None,
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if owners.is_empty() {
                continue;
            }
            if owners.len() > 1 {
                self.ambiguous.insert(column.to_lowercase());
            }
            for t in owners {
                self.add_checked(&t, column);
            }
            return;
        }
    }

    fn expr(&mut self, e: &Expr) {
        let mut collector = Collector::default();
        let _ = e.visit(&mut collector);
        for name in collector.names {
            match name.as_slice() {
                [col] => self.unqualified(col),
                [.., q, col] => self.qualified(q, col),
                [] => {}
            }
        }
        for q in collector.subqueries {
            self.query(&q);
        }
    }
}

enum Constraint {
    On(Box<Expr>),
    Using(Vec<String>),
}

fn join_constraint(op: &JoinOperator) -> Option<&JoinConstraint> {
    match op {
        JoinOperator::Join(c)
        | JoinOperator::Inner(c)
        | JoinOperator::Left(c)
        | JoinOperator::LeftOuter(c)
        | JoinOperator::Right(c)
        | JoinOperator::RightOuter(c)
        | JoinOperator::FullOuter(c)
        | JoinOperator::CrossJoin(c)
        | JoinOperator::Semi(c)
        | JoinOperator::LeftSemi(c)
        | JoinOperator::RightSemi(c)
        | JoinOperator::Anti(c)
        | JoinOperator::LeftAnti(c)
        | JoinOperator::RightAnti(c) => Some(c),
        _ => None,
    }
}

fn last_part(name: &ObjectName) -> Option<String> {
    match name.0.last()? {
        ObjectNamePart::Identifier(ident) => Some(ident.value.clone()),
        ObjectNamePart::Function(_) => None,
    }
}

/// Gathers identifier paths of one expression, stopping at nested queries,
/// which are handed back for scoped processing.
#[derive(Default)]
struct Collector {
    depth: usize,
    names: Vec<Vec<String>>,
    subqueries: Vec<Query>,
}

impl Visitor for Collector {
    type Break = ();

    fn pre_visit_query(&mut self, query: &Query) -> ControlFlow<()> {
        if self.depth == 0 {
            self.subqueries.push(query.clone());
        }
        self.depth += 1;
        ControlFlow::Continue(())
    }

    fn post_visit_query(&mut self, _query: &Query) -> ControlFlow<()> {
        self.depth -= 1;
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, expr: &Expr) -> ControlFlow<()> {
        if self.depth > 0 {
            return ControlFlow::Continue(());
        }
        match expr {
            Expr::Identifier(ident) => self.names.push(vec![ident.value.clone()]),
            Expr::CompoundIdentifier(parts) => self.names.push(parts.iter().map(|p| p.value.clone()).collect()),
            _ => {}
        }
        ControlFlow::Continue(())
    }
}

/// Extracts references from a query over the flattened table and maps them
/// to original `(table, column)` pairs through the schema's stored mapping.
pub fn extract_refs_simplified(sql: &str, s: &SimplifiedSchema) -> Result<SimplifiedRefs, SqlParseError> {
    let query = parse_query(sql)?;
    let mut collector = FlatCollector::default();
    let _ = query.visit(&mut collector);

    let mut out = SimplifiedRefs::default();
    let mut unresolved = BTreeSet::new();
    let add = |refs: &mut RefSet, table: &str, column: &str| refs.add_column(table, column);

    for name in &collector.names {
        let joined = name.join(".");
        let hit = s
            .resolve(&joined)
            .or_else(|| (name.len() > 2).then(|| s.resolve(&name[1..].join("."))).flatten());
        match hit {
            Some(entry) => add(&mut out.refs, &entry.table, &entry.column),
            None if name.len() > 1 || joined.contains('.') => {
                unresolved.insert(joined);
            }
            None => {}
        }
    }
    for qualifier in &collector.qualified_wildcards {
        for e in s.entries().iter().filter(|e| e.table.eq_ignore_ascii_case(qualifier)) {
            add(&mut out.refs, &e.table, &e.column);
        }
    }
    if collector.wildcard
        && collector
            .relations
            .iter()
            .any(|r| r.eq_ignore_ascii_case(s.virtual_table_name()))
    {
        for e in s.entries() {
            add(&mut out.refs, &e.table, &e.column);
        }
    }
    out.unresolved = unresolved.into_iter().collect();
    Ok(out)
}

#[derive(Default)]
struct FlatCollector {
    names: Vec<Vec<String>>,
    relations: Vec<String>,
    wildcard: bool,
    qualified_wildcards: Vec<String>,
}

impl Visitor for FlatCollector {
    type Break = ();

    fn pre_visit_relation(&mut self, relation: &ObjectName) -> ControlFlow<()> {
        if let Some(n) = last_part(relation) {
            self.relations.push(n);
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_select(&mut self, select: &Select) -> ControlFlow<()> {
        for item in &select.projection {
            match item {
                SelectItem::Wildcard(_) => self.wildcard = true,
                SelectItem::QualifiedWildcard(SelectItemQualifiedWildcardKind::ObjectName(n), _) => {
                    if let Some(q) = last_part(n) {
                        self.qualified_wildcards.push(q);
                    }
                }
                _ => {}
            }
        }
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, expr: &Expr) -> ControlFlow<()> {
        match expr {
            Expr::Identifier(ident) => self.names.push(vec![ident.value.clone()]),
            Expr::CompoundIdentifier(parts) => self.names.push(parts.iter().map(|p| p.value.clone()).collect()),
            _ => {}
        }
        ControlFlow::Continue(())
    }
}
