//! Read-only SQL execution and result comparison.

use std::cmp::Ordering;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Absolute tolerance for numeric cell comparison.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob { blob: String },
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob { .. } => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Integer(i) => Some(i as f64),
            Cell::Real(r) => Some(r),
            _ => None,
        }
    }

    /// Equality used for answers: numbers within tolerance, text ignoring
    /// trailing whitespace, NULL only equal to NULL.
    pub fn matches(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Null, Cell::Null) => true,
            (Cell::Text(a), Cell::Text(b)) => a.trim_end() == b.trim_end(),
            (Cell::Blob { blob: a }, Cell::Blob { blob: b }) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x - y).abs() <= NUMERIC_TOLERANCE || x == y,
                _ => false,
            },
        }
    }

    /// A total order consistent with `matches` away from tolerance edges.
    fn canonical_cmp(&self, other: &Cell) -> Ordering {
        self.rank().cmp(&other.rank()).then_with(|| match (self, other) {
            (Cell::Text(a), Cell::Text(b)) => a.trim_end().cmp(b.trim_end()),
            (Cell::Blob { blob: a }, Cell::Blob { blob: b }) => a.cmp(b),
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => Ordering::Equal,
            },
        })
    }
}

pub type Row = Vec<Cell>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Not serialized, so that replayed runs write identical records.
    #[serde(skip)]
    pub wall_ms: u64,
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    fn failed(status: ExecStatus, error: String, started: Instant) -> Self {
        Self {
            status,
            rows: None,
            error: Some(error),
            wall_ms: started.elapsed().as_millis() as u64,
        }
    }
}

/// Runs the first statement of `sql` on a read-only connection to
/// `db_file`, materializing all rows.
pub fn execute(sql: &str, db_file: &Path, timeout: Duration) -> ExecOutcome {
    let started = Instant::now();
    let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
    let conn = match Connection::open_with_flags(db_file, flags) {
        Ok(c) => c,
        Err(e) => {
            return ExecOutcome::failed(
                ExecStatus::RuntimeError,
                format!("opening {}: {e}", db_file.display()),
                started,
            )
        }
    };
    let deadline = started + timeout;
    if let Err(e) = conn.progress_handler(1_000, Some(move || Instant::now() >= deadline)) {
        return ExecOutcome::failed(ExecStatus::RuntimeError, e.to_string(), started);
    }
    match run(&conn, sql) {
        Ok(rows) => ExecOutcome {
            status: ExecStatus::Ok,
            rows: Some(rows),
            error: None,
            wall_ms: started.elapsed().as_millis() as u64,
        },
        Err(e) => {
            let interrupted = matches!(
                &e,
                rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted
            );
            let status = if interrupted {
                ExecStatus::Timeout
            } else {
                ExecStatus::RuntimeError
            };
            ExecOutcome::failed(status, e.to_string(), started)
        }
    }
}

fn run(conn: &Connection, sql: &str) -> rusqlite::Result<Vec<Row>> {
    let mut stmt = conn.prepare(sql)?;
    if !stmt.readonly() {
        return Err(rusqlite::Error::InvalidQuery);
    }
    let width = stmt.column_count();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut cells = Vec::with_capacity(width);
        for i in 0..width {
            cells.push(match row.get_ref(i)? {
                ValueRef::Null => Cell::Null,
                ValueRef::Integer(v) => Cell::Integer(v),
                ValueRef::Real(v) => Cell::Real(v),
                ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Cell::Blob { blob: hex::encode(b) },
            });
        }
        out.push(cells);
    }
    Ok(out)
}

fn rows_match(a: &Row, b: &Row) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.matches(y))
}

fn canonical_rows(rows: &[Row]) -> Vec<&Row> {
    let mut sorted: Vec<&Row> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.canonical_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.len().cmp(&b.len()))
    });
    sorted
}

/// Whether `pred` returns the gold answer: multiset comparison of rows, or
/// sequence comparison when the gold query orders its output.
pub fn compare_results(gold: &ExecOutcome, pred: &ExecOutcome, gold_has_order_by: bool) -> bool {
    let (Some(g), Some(p)) = (&gold.rows, &pred.rows) else {
        return false;
    };
    if !gold.is_ok() || !pred.is_ok() || g.len() != p.len() {
        return false;
    }
    if gold_has_order_by {
        g.iter().zip(p).all(|(a, b)| rows_match(a, b))
    } else {
        canonical_rows(g)
            .into_iter()
            .zip(canonical_rows(p))
            .all(|(a, b)| rows_match(a, b))
    }
}
