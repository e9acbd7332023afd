//! Typo injection over the fixture corpus, with an independent splitter
//! and acceptance rule to judge the corrector against.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use unjoin_core::correction::{correct_identifiers, CorrectionReport};
use unjoin_core::schema::DatabaseSchema;

/// Words the perturber must never produce.
pub const RESERVED: &[&str] = &[
    "and",
    "as",
    "asc",
    "avg",
    "by",
    "count",
    "desc",
    "distinct",
    "except",
    "exists",
    "from",
    "group",
    "having",
    "in",
    "intersect",
    "is",
    "join",
    "limit",
    "max",
    "min",
    "not",
    "null",
    "on",
    "or",
    "order",
    "select",
    "sum",
    "union",
    "where",
    "with",
];

pub static SPLIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"'(?:[^']|'')*'|"[^"]*"|[A-Za-z_][A-Za-z0-9_]*|[0-9]+(?:\.[0-9]+)?|\s+|."#).unwrap());

/// Independent splitter: (byte offset, text) for every lexical piece.
pub fn split(sql: &str) -> Vec<(usize, &str)> {
    SPLIT.find_iter(sql).map(|m| (m.start(), m.as_str())).collect()
}

pub fn is_word(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
}

pub fn schema_names(db: &DatabaseSchema) -> BTreeSet<String> {
    db.tables()
        .iter()
        .flat_map(|t| std::iter::once(t.name.to_lowercase()).chain(t.columns.iter().map(|c| c.name.to_lowercase())))
        .collect()
}

pub struct Case {
    pub db: DatabaseSchema,
    pub sql: String,
}

/// 25 gold join queries followed by the reference fixture, first 50.
pub fn corpus() -> Vec<Case> {
    let cat = super::catalogue();
    let gold = super::gold_queries().into_iter().map(|g| (g.db_id, g.final_sql));
    let refs = super::ref_cases().into_iter().map(|r| (r.db_id, r.sql));
    gold.chain(refs)
        .take(50)
        .map(|(db_id, sql)| Case {
            db: cat.get(&db_id).unwrap().clone(),
            sql,
        })
        .collect()
}

pub fn edit(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let letter = |rng: &mut ChaCha8Rng| (b'a' + rng.random_range(0..26u8)) as char;
    match rng.random_range(0..4) {
        0 => {
            let i = rng.random_range(0..chars.len());
            chars[i] = letter(rng);
        }
        1 => {
            let i = rng.random_range(0..=chars.len());
            chars.insert(i, letter(rng));
        }
        2 if chars.len() > 1 => {
            chars.remove(rng.random_range(0..chars.len()));
        }
        _ if chars.len() > 1 => {
            let i = rng.random_range(0..chars.len() - 1);
            chars.swap(i, i + 1);
        }
        _ => chars.push(letter(rng)),
    }
    chars.into_iter().collect()
}

pub struct Perturbed {
    pub sql: String,
    pub original: String,
    pub typo: String,
}

/// Replaces one schema identifier of `case` with a 1–2 edit typo that is
/// not itself a valid name, a reserved word, or another word of the query.
pub fn perturb(case: &Case, seed: u64) -> Option<Perturbed> {
    let names = schema_names(&case.db);
    let pieces = split(&case.sql);
    let words: BTreeSet<String> = pieces
        .iter()
        .filter(|(_, t)| is_word(t))
        .map(|(_, t)| t.to_lowercase())
        .collect();
    let targets: Vec<(usize, &str)> = pieces
        .iter()
        .map(|&(at, t)| match t.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
            Some(inner) => (at + 1, inner),
            None => (at, t),
        })
        .filter(|(_, t)| is_word(t) && t.len() >= 3 && names.contains(&t.to_lowercase()))
        .collect();
    if targets.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..200 {
        let (at, word) = targets[rng.random_range(0..targets.len())];
        let mut typo = edit(word, &mut rng);
        if rng.random_bool(0.5) {
            typo = edit(&typo, &mut rng);
        }
        let lower = typo.to_lowercase();
        if typo.len() < 3
            || !is_word(&typo)
            || names.contains(&lower)
            || words.contains(&lower)
            || RESERVED.contains(&lower.as_str())
        {
            continue;
        }
        let sql = format!("{}{}{}", &case.sql[..at], typo, &case.sql[at + word.len()..]);
        return Some(Perturbed {
            sql,
            original: word.to_string(),
            typo,
        });
    }
    None
}

/// Independent acceptance rule: distance within `max(2, ceil(0.4 n))`, or
/// a prefix abbreviation of at least three characters.
pub fn oracle_accepts(typo: &str, candidate: &str) -> bool {
    let (a, b) = (typo.to_lowercase(), candidate.to_lowercase());
    let d = strsim::levenshtein(&a, &b);
    let limit = ((0.4 * b.chars().count() as f64).ceil() as usize).max(2);
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    d <= limit || (short.len() >= 3 && long.starts_with(short.as_str()))
}

/// Restores a perturbed copy of every corpus query (seeds `1000 + i`) and
/// returns the restored count with a description of each miss.
pub fn restoration_run() -> (usize, usize, Vec<String>) {
    let corpus = corpus();
    let mut restored = 0;
    let mut misses = Vec::new();
    for (i, case) in corpus.iter().enumerate() {
        let p = perturb(case, 1000 + i as u64).expect("every corpus query has a schema identifier");
        let (fixed, report) = correct_identifiers(&p.sql, &case.db);
        if fixed == case.sql {
            restored += 1;
            let sub = &report.substitutions[0];
            assert_eq!(report.substitutions.len(), 1);
            assert_eq!(
                sub.distance,
                strsim::levenshtein(&p.typo.to_lowercase(), &p.original.to_lowercase())
            );
            assert!(oracle_accepts(&p.typo, &p.original), "{} -> {}", p.typo, p.original);
        } else {
            misses.push(format!("{} (expected {}): {fixed}", p.typo, p.original));
        }
    }
    (restored, corpus.len(), misses)
}

/// Pieces differ only where a substitution was reported, and only by
/// replacing one identifier with a schema name.
pub fn logic_preserved(
    input: &str,
    output: &str,
    report: &CorrectionReport,
    db: &DatabaseSchema,
) -> Result<(), String> {
    let names = schema_names(db);
    let (a, b) = (split(input), split(output));
    if a.len() != b.len() {
        return Err(format!("piece count changed: {input} => {output}"));
    }
    let positions: BTreeSet<usize> = report.substitutions.iter().map(|s| s.position).collect();
    let mut changed = BTreeSet::new();
    let unquote = |s: &str| s.trim_matches(|c| c == '`' || c == '"').to_string();
    for ((pos, x), (_, y)) in a.iter().zip(&b) {
        if x != y {
            changed.insert(*pos);
            if !is_word(&unquote(x)) {
                return Err(format!("non-identifier piece changed: {x:?} -> {y:?}"));
            }
            if !names.contains(&unquote(y).to_lowercase()) {
                return Err(format!("{y} is not a schema name"));
            }
        }
    }
    if changed != positions {
        return Err(format!("changed at {changed:?}, reported {positions:?}: {input}"));
    }
    Ok(())
}

/// Checks idempotence and logic preservation for `seeds` perturbations of
/// every corpus query; returns the number of checked cases.
pub fn invariant_sweep(seeds: u64) -> Result<usize, String> {
    let mut checked = 0;
    for case in corpus() {
        for seed in 0..seeds {
            let p = perturb(&case, seed).ok_or("no identifier to perturb")?;
            let (once, report) = correct_identifiers(&p.sql, &case.db);
            logic_preserved(&p.sql, &once, &report, &case.db)?;
            let (twice, again) = correct_identifiers(&once, &case.db);
            if twice != once || !again.substitutions.is_empty() {
                return Err(format!("not idempotent: {once} => {twice}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
