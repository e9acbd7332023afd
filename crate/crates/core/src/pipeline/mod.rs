//! End-to-end methods: UNJOIN multi-prompt and single-prompt, and the CoT /
//! CoT-SS baselines. Each run records every intermediate artefact and, on
//! failure, the first stage that failed.

mod pool;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correction::{correct_identifiers, correct_identifiers_simplified, CorrectionReport};
use crate::llm::{extract_sql, extract_sql_blocks, LlmClient};
use crate::prompting::{BaselineKind, TemplateSet};
use crate::schema::{render_original, render_simplified, simplify_schema, DatabaseSchema, Descriptions};

pub use pool::{
    assemble_pool, read_retrieval_file, PoolError, PoolTable, RetrievalEntry, RetrievedTable, TablePool, DEFAULT_TOP_K,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    UnjoinSp,
    UnjoinMp,
    Cot,
    CotSs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::UnjoinSp, Method::UnjoinMp, Method::Cot, Method::CotSs];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::UnjoinSp => "unjoin-sp",
            Method::UnjoinMp => "unjoin-mp",
            Method::Cot => "cot",
            Method::CotSs => "cot-ss",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (expected unjoin-sp, unjoin-mp, cot or cot-ss)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Retrieval,
    Schema,
    Step1Prompt,
    Step1Complete,
    Step1Extract,
    Step2Prompt,
    Step2Complete,
    Step2Extract,
    Prompt,
    Complete,
    Extract,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("stage serializes");
        f.write_str(v.as_str().expect("unit variant"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedQuery {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplified_correction: Option<CorrectionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_correction: Option<CorrectionReport>,
    pub completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

impl PredictedQuery {
    fn new(method: Method) -> Self {
        Self {
            method,
            intermediate_sql: None,
            final_sql: None,
            simplified_correction: None,
            final_correction: None,
            completions: Vec::new(),
            failure: None,
        }
    }

    fn fail(mut self, stage: Stage, reason: impl fmt::Display) -> Self {
        log::debug!("{} failed at {stage}: {reason}", self.method);
        self.final_sql = None;
        self.failure = Some(Failure {
            stage,
            reason: reason.to_string(),
        });
        self
    }

    fn finish(mut self, sql: &str, db: &DatabaseSchema) -> Self {
        let (fixed, report) = correct_identifiers(sql, db);
        self.final_sql = Some(fixed);
        self.final_correction = Some(report);
        self
    }

    /// A prediction that never started because the table pool could not be
    /// built.
    pub fn retrieval_failure(method: Method, reason: impl fmt::Display) -> Self {
        Self::new(method).fail(Stage::Retrieval, reason)
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// What a method sees of one question.
#[derive(Debug, Clone, Copy)]
pub struct ItemInput<'a> {
    /// Question text, with any evidence already appended.
    pub question: &'a str,
    pub db: &'a DatabaseSchema,
    pub descriptions: Option<&'a Descriptions>,
}

#[derive(Debug, Clone, Copy)]
pub struct MethodContext<'a> {
    pub templates: &'a TemplateSet,
    pub client: &'a LlmClient,
}

pub fn run_unjoin_mp(input: ItemInput<'_>, ctx: MethodContext<'_>) -> PredictedQuery {
    let mut out = PredictedQuery::new(Method::UnjoinMp);
    let s = match simplify_schema(input.db) {
        Ok(s) => s,
        Err(e) => return out.fail(Stage::Schema, e),
    };

    let prompt = match ctx
        .templates
        .build_mp_step1_prompt(&s, input.question, input.descriptions)
    {
        Ok(p) => p,
        Err(e) => return out.fail(Stage::Step1Prompt, e),
    };
    let completion = match ctx.client.complete(&prompt) {
        Ok(c) => c,
        Err(e) => return out.fail(Stage::Step1Complete, e),
    };
    out.completions.push(completion);
    let simplified = match extract_sql(&out.completions[0]) {
        Ok(sql) => sql,
        Err(e) => return out.fail(Stage::Step1Extract, e),
    };
    let (simplified, report) = correct_identifiers_simplified(&simplified, &s);
    out.intermediate_sql = Some(simplified.clone());
    out.simplified_correction = Some(report);

    let prompt = match ctx
        .templates
        .build_mp_step2_prompt(&s, &simplified, input.question, input.db)
    {
        Ok(p) => p,
        Err(e) => return out.fail(Stage::Step2Prompt, e),
    };
    let completion = match ctx.client.complete(&prompt) {
        Ok(c) => c,
        Err(e) => return out.fail(Stage::Step2Complete, e),
    };
    out.completions.push(completion);
    match extract_sql(&out.completions[1]) {
        Ok(sql) => out.finish(&sql, input.db),
        Err(e) => out.fail(Stage::Step2Extract, e),
    }
}

pub fn run_unjoin_sp(input: ItemInput<'_>, ctx: MethodContext<'_>) -> PredictedQuery {
    let mut out = PredictedQuery::new(Method::UnjoinSp);
    let s = match simplify_schema(input.db) {
        Ok(s) => s,
        Err(e) => return out.fail(Stage::Schema, e),
    };
    let prompt = match ctx
        .templates
        .build_sp_prompt(&s, input.question, input.db, input.descriptions)
    {
        Ok(p) => p,
        Err(e) => return out.fail(Stage::Prompt, e),
    };
    let completion = match ctx.client.complete(&prompt) {
        Ok(c) => c,
        Err(e) => return out.fail(Stage::Complete, e),
    };
    let blocks = extract_sql_blocks(&completion);
    out.completions.push(completion);
    let Some(last) = blocks.last() else {
        return out.fail(Stage::Extract, crate::llm::ExtractError);
    };
    if blocks.len() >= 2 {
        let (simplified, report) = correct_identifiers_simplified(&blocks[0], &s);
        out.intermediate_sql = Some(simplified);
        out.simplified_correction = Some(report);
    } else {
        log::warn!("single-prompt completion has one SQL block; no intermediate query recorded");
    }
    out.finish(last, input.db)
}

pub fn run_baseline(input: ItemInput<'_>, ctx: MethodContext<'_>, kind: BaselineKind) -> PredictedQuery {
    let method = match kind {
        BaselineKind::Cot => Method::Cot,
        BaselineKind::CotSs => Method::CotSs,
    };
    let mut out = PredictedQuery::new(method);
    let schema_block = match kind {
        BaselineKind::Cot => render_original(input.db),
        BaselineKind::CotSs => match simplify_schema(input.db) {
            Ok(s) => render_simplified(&s, input.descriptions),
            Err(e) => return out.fail(Stage::Schema, e),
        },
    };
    let prompt = match ctx.templates.build_baseline_prompt(kind, &schema_block, input.question) {
        Ok(p) => p,
        Err(e) => return out.fail(Stage::Prompt, e),
    };
    let completion = match ctx.client.complete(&prompt) {
        Ok(c) => c,
        Err(e) => return out.fail(Stage::Complete, e),
    };
    out.completions.push(completion);
    match extract_sql(&out.completions[0]) {
        Ok(sql) => out.finish(&sql, input.db),
        Err(e) => out.fail(Stage::Extract, e),
    }
}

pub fn run_method(method: Method, input: ItemInput<'_>, ctx: MethodContext<'_>) -> PredictedQuery {
    match method {
        Method::UnjoinMp => run_unjoin_mp(input, ctx),
        Method::UnjoinSp => run_unjoin_sp(input, ctx),
        Method::Cot => run_baseline(input, ctx, BaselineKind::Cot),
        Method::CotSs => run_baseline(input, ctx, BaselineKind::CotSs),
    }
}

/// Maps `f` over `items` on a pool of `workers` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CacheMode, ChatRequest, ChatResponse, LlmConfig, Transport, TransportError};
    use crate::schema::{ColumnDef, ColumnRef, ForeignKey, TableDef};
    use std::sync::Mutex;

    /// Answers prompts from a script keyed by a marker the prompt must contain.
    struct Scripted(Vec<(&'static str, &'static str)>, Mutex<Vec<String>>);

    impl Transport for Scripted {
        fn send(&self, req: &ChatRequest<'_>) -> Result<ChatResponse, TransportError> {
            self.1.lock().unwrap().push(req.prompt.to_string());
            let reply = self
                .0
                .iter()
                .find(|(marker, _)| req.prompt.contains(marker))
                .map(|(_, r)| *r)
                .ok_or_else(|| TransportError::Fatal("unscripted prompt".into()))?;
            Ok(ChatResponse {
                content: reply.to_string(),
                prompt_tokens: None,
                completion_tokens: None,
            })
        }
    }

    fn bank() -> DatabaseSchema {
        let t =
            |name: &str, cols: &[&str]| TableDef::new(name, cols.iter().map(|c| ColumnDef::new(*c, "text")).collect());
        DatabaseSchema::new(
            "bank_data",
            vec![
                t("customer", &["customer_id", "name", "gender"]),
                t("account", &["account_id", "customer_id", "balance"]),
                t("loan", &["loan_id", "customer_id", "amount", "status"]),
            ],
            vec![
                ForeignKey {
                    from: ColumnRef::new("account", "customer_id"),
                    to: ColumnRef::new("customer", "customer_id"),
                },
                ForeignKey {
                    from: ColumnRef::new("loan", "customer_id"),
                    to: ColumnRef::new("customer", "customer_id"),
                },
            ],
        )
        .unwrap()
    }

    fn client(script: Vec<(&'static str, &'static str)>) -> LlmClient {
        LlmClient::new(
            LlmConfig::default(),
            CacheMode::Live,
            None,
            Box::new(Scripted(script, Mutex::default())),
        )
        .unwrap()
    }

    const STEP1: &str = "DO NOT perform any join operations";
    const STEP2: &str = "**Output:**";

    #[test]
    fn mp_runs_both_stages_and_corrects() {
        let templates = TemplateSet::builtin();
        let client = client(vec![
            (STEP1, "```sql\nSELECT customer.customer_id, customer.name, loan.loan_id, loan.amount FROM bank_data WHERE loan.status = 'Approved';\n```"),
            (STEP2, "```sql\nSELECT T1.customer_id, T1.name, T2.loan_id, T2.amount FROM customer AS T1 JOIN loans AS T2 ON T1.customer_id = T2.customer_id WHERE T2.status = 'Approved';\n```"),
        ]);
        let db = bank();
        let input = ItemInput {
            question: "List all customers with an approved loan.",
            db: &db,
            descriptions: None,
        };
        let ctx = MethodContext {
            templates: &templates,
            client: &client,
        };
        let p = run_unjoin_mp(input, ctx);
        assert!(p.failure.is_none(), "{p:?}");
        assert_eq!(p.completions.len(), 2);
        assert!(p.intermediate_sql.as_deref().unwrap().contains("FROM bank_data"));
        let fin = p.final_sql.as_deref().unwrap();
        assert!(
            fin.contains("JOIN loan AS T2 ON T1.customer_id = T2.customer_id"),
            "{fin}"
        );
        assert_eq!(p.final_correction.as_ref().unwrap().substitutions.len(), 1);
    }

    #[test]
    fn mp_step1_extract_failure_short_circuits() {
        let templates = TemplateSet::builtin();
        let scripted = Scripted(vec![(STEP1, "Sorry, I cannot help.")], Mutex::default());
        let client = LlmClient::new(LlmConfig::default(), CacheMode::Live, None, Box::new(scripted)).unwrap();
        let db = bank();
        let p = run_unjoin_mp(
            ItemInput {
                question: "q?",
                db: &db,
                descriptions: None,
            },
            MethodContext {
                templates: &templates,
                client: &client,
            },
        );
        let f = p.failure.unwrap();
        assert_eq!(f.stage, Stage::Step1Extract);
        assert_eq!(f.stage.to_string(), "step1-extract");
        assert_eq!(p.completions.len(), 1);
        assert!(p.final_sql.is_none());
    }

    #[test]
    fn sp_uses_first_and_last_blocks() {
        let templates = TemplateSet::builtin();
        let db = bank();
        let input = ItemInput {
            question: "How many customers?",
            db: &db,
            descriptions: None,
        };
        let two = client(vec![(
            "Step 1: Getting",
            "Simplified:\n```sql\nSELECT COUNT(customer.customer_id) FROM bank_data;\n```\nFinal:\n```sql\nSELECT COUNT(customer_id) FROM customer;\n```",
        )]);
        let p = run_unjoin_sp(
            input,
            MethodContext {
                templates: &templates,
                client: &two,
            },
        );
        assert_eq!(
            p.intermediate_sql.as_deref(),
            Some("SELECT COUNT(customer.customer_id) FROM bank_data;")
        );
        assert_eq!(p.final_sql.as_deref(), Some("SELECT COUNT(customer_id) FROM customer;"));

        let one = client(vec![("Step 1: Getting", "```sql\nSELECT COUNT(*) FROM customer\n```")]);
        let p = run_unjoin_sp(
            input,
            MethodContext {
                templates: &templates,
                client: &one,
            },
        );
        assert!(p.intermediate_sql.is_none());
        assert_eq!(p.final_sql.as_deref(), Some("SELECT COUNT(*) FROM customer"));
    }

    #[test]
    fn baselines_pick_their_schema_block() {
        let templates = TemplateSet::builtin();
        let db = bank();
        let input = ItemInput {
            question: "How many loans?",
            db: &db,
            descriptions: None,
        };
        let c = client(vec![(
            "Output:",
            "Reasoning...\n```sql\nSELECT count(*) FROM loan\n```",
        )]);
        let ctx = MethodContext {
            templates: &templates,
            client: &c,
        };
        let cot = run_baseline(input, ctx, BaselineKind::Cot);
        let ss = run_baseline(input, ctx, BaselineKind::CotSs);
        assert_eq!(cot.method, Method::Cot);
        assert_eq!(ss.method, Method::CotSs);
        assert_eq!(cot.final_sql, ss.final_sql);
        assert!(cot.intermediate_sql.is_none());
    }

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(par_map(&v, 4, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.as_str());
        }
    }
}
