//! Pulling SQL out of free-form completions.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::correction::lexer::{tokenize, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no SQL found in completion")]
pub struct ExtractError;

static SELECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bselect\b").unwrap());
static LINE_SELECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?im)^[ \t]*(select)\b").unwrap());
// WITH only counts when it opens a CTE, since "with" is common in prose
static WITH_CTE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\bwith\s+(recursive\s+)?[\w"`\[\]]+\s*(\([^)]*\)\s*)?as\s*\("#).unwrap());

/// Extracts one SQL statement: the first fenced block if the completion has
/// any fence, otherwise everything from the first SELECT / CTE-opening WITH.
/// Text after the first terminating semicolon is dropped.
pub fn extract_sql(completion: &str) -> Result<String, ExtractError> {
    let body = match fenced_blocks(completion).into_iter().next() {
        Some(block) if !block.trim().is_empty() => block,
        _ => keyword_suffix(completion).ok_or(ExtractError)?,
    };
    let sql = first_statement(body);
    if sql.is_empty() {
        Err(ExtractError)
    } else {
        Ok(sql.to_string())
    }
}

/// Every SQL statement in the completion, in order: one per non-empty
/// fenced block, or the statements after the first SQL keyword when the
/// completion has no fences.
pub fn extract_sql_blocks(completion: &str) -> Vec<String> {
    let blocks: Vec<String> = fenced_blocks(completion)
        .into_iter()
        .map(first_statement)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if !blocks.is_empty() {
        return blocks;
    }
    let Some(mut rest) = keyword_suffix(completion) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    loop {
        let stmt = first_statement(rest);
        if stmt.is_empty() {
            break;
        }
        out.push(stmt.to_string());
        let consumed = stmt.as_ptr() as usize - rest.as_ptr() as usize + stmt.len();
        match keyword_suffix(&rest[consumed..]) {
            Some(next) => rest = next,
            None => break,
        }
    }
    out
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (```sql)
        let body_start = after.find('\n').map_or(after.len(), |n| n + 1);
        let info = &after[..body_start];
        let body_start = if info.trim().chars().all(|c| c.is_alphanumeric() || c == '-' || c == '_') {
            body_start
        } else {
            0
        };
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

fn keyword_suffix(text: &str) -> Option<&str> {
    // a SELECT opening a line beats one inside prose ("we select ...")
    let s = LINE_SELECT
        .captures(text)
        .and_then(|c| c.get(1))
        .or_else(|| SELECT.find(text))
        .map(|m| m.start());
    let w = WITH_CTE.find(text).map(|m| m.start());
    let start = match (s, w) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => a.or(b)?,
    };
    Some(&text[start..])
}

/// The text up to and including the first semicolon outside quotes and
/// comments, trimmed.
fn first_statement(sql: &str) -> &str {
    let end = tokenize(sql)
        .into_iter()
        .find(|t| t.kind == TokenKind::Punct && t.text == ";")
        .map_or(sql.len(), |t| t.start + 1);
    sql[..end].trim()
}
