//! Scripted model for end-to-end runs: answers each prompt with the gold
//! SQL of the fixture item whose question it contains.

use std::sync::atomic::{AtomicUsize, Ordering};

use unjoin_core::llm::{ChatRequest, ChatResponse, Transport, TransportError};

use super::GoldQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behaviour {
    /// Always the gold answer.
    Gold,
    /// Per item: gold, gold with a misspelt table, a wrong answer, no SQL,
    /// or a query that fails at runtime.
    Noisy,
}

pub struct OracleTransport {
    pub gold: Vec<GoldQuery>,
    pub behaviour: Behaviour,
    pub calls: AtomicUsize,
}

impl OracleTransport {
    pub fn new(gold: Vec<GoldQuery>, behaviour: Behaviour) -> Self {
        Self {
            gold,
            behaviour,
            calls: AtomicUsize::new(0),
        }
    }

    fn item(&self, prompt: &str) -> Option<(usize, &GoldQuery)> {
        self.gold
            .iter()
            .enumerate()
            .filter(|(_, g)| prompt.contains(&format!("Question: {}\n", g.question)))
            .max_by_key(|(_, g)| g.question.len())
    }

    fn final_sql(&self, index: usize, g: &GoldQuery) -> Option<String> {
        match (self.behaviour, index % 5) {
            (Behaviour::Gold, _) | (Behaviour::Noisy, 0) => Some(g.final_sql.clone()),
            (Behaviour::Noisy, 1) => Some(misspell(&g.final_sql)),
            (Behaviour::Noisy, 2) => Some(format!("{} LIMIT 0", g.final_sql)),
            (Behaviour::Noisy, 3) => None,
            _ => Some("SELECT missing_column FROM account".to_string()),
        }
    }
}

/// Drops the second letter of the first FROM table: `customer` -> `cstomer`.
fn misspell(sql: &str) -> String {
    let at = sql.find(" FROM ").expect("gold SQL has FROM") + 6;
    format!("{}{}", &sql[..at + 1], &sql[at + 2..])
}

fn fence(sql: &str) -> String {
    format!("```sql\n{sql}\n```")
}

impl Transport for OracleTransport {
    fn send(&self, request: &ChatRequest<'_>) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.prompt;
        let (index, g) = self
            .item(prompt)
            .ok_or_else(|| TransportError::Fatal("prompt names no fixture question".into()))?;
        let content = if prompt.contains("DO NOT perform any join operations") {
            fence(&g.simplified)
        } else {
            match self.final_sql(index, g) {
                None => "I am not able to write this query.".to_string(),
                Some(sql) if prompt.contains("DO NOT do any join operations") => {
                    format!("Step 1:\n{}\n\nStep 2:\n{}", fence(&g.simplified), fence(&sql))
                }
                Some(sql) => format!("The query joins the needed tables.\n\n{}", fence(&sql)),
            }
        };
        Ok(ChatResponse {
            content,
            prompt_tokens: None,
            completion_tokens: None,
        })
    }
}
