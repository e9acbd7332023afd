//! Prompt construction from plain-text templates with `{slot}` placeholders.
//!
//! The built-in templates live in `templates/` and are compiled in; a
//! directory of same-named files can override any of them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{render_original, render_simplified, DatabaseSchema, Descriptions, SimplifiedSchema};

/// Slot names a template may reference.
pub const SLOTS: [&str; 5] = [
    "schema_block",
    "question",
    "original_schema_block",
    "simplified_query",
    "examples_block",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("template `{template}` uses slot `{slot}` but no value was given")]
    MissingSlot { template: String, slot: String },
    #[error("unknown baseline kind `{0}` (expected cot or cot-ss)")]
    UnknownBaseline(String),
    #[error("reading template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Cot,
    CotSs,
}

impl FromStr for BaselineKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cot" => Ok(Self::Cot),
            "cot-ss" => Ok(Self::CotSs),
            _ => Err(PromptError::UnknownBaseline(s.to_string())),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cot => "cot",
            Self::CotSs => "cot-ss",
        })
    }
}

/// A named template text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub text: String,
}

impl PromptTemplate {
    /// Substitutes `{slot}` placeholders in one left-to-right pass, so slot
    /// values are never themselves expanded. Braces that do not name a slot
    /// are kept as written.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let slot = after
                .find('}')
                .map(|close| &after[..close])
                .filter(|s| SLOTS.contains(s));
            match slot {
                Some(slot) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| *k == slot)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingSlot {
                            template: self.id.to_string(),
                            slot: slot.to_string(),
                        })?;
                    out.push_str(value);
                    rest = &after[slot.len() + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

macro_rules! builtin {
    ($($field:ident => $file:literal),* $(,)?) => {
        /// Every template the pipeline uses.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct TemplateSet {
            $(pub $field: PromptTemplate,)*
        }

        impl TemplateSet {
            pub fn builtin() -> Self {
                Self {
                    $($field: PromptTemplate {
                        id: $file,
                        text: trim_final_newline(include_str!(concat!("../../templates/", $file))).to_string(),
                    },)*
                }
            }

            /// Loads templates from `dir`; files that are absent fall back to
            /// the built-in text.
            pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
                let mut set = Self::builtin();
                $(
                    let path = dir.join($file);
                    match std::fs::read_to_string(&path) {
                        Ok(text) => set.$field.text = trim_final_newline(&text).to_string(),
                        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                        Err(source) => return Err(PromptError::Io { path, source }),
                    }
                )*
                Ok(set)
            }

            /// SHA-256 of each template, keyed by file name.
            pub fn hashes(&self) -> BTreeMap<String, String> {
                let mut out = BTreeMap::new();
                $(out.insert($file.to_string(), self.$field.sha256());)*
                out
            }
        }
    };
}

builtin! {
    sp => "sp.txt",
    mp_step1 => "mp_step1.txt",
    mp_step2 => "mp_step2.txt",
    cot => "cot.txt",
    cot_ss => "cot_ss.txt",
    bank_fewshot => "bank_fewshot.txt",
    translation_examples => "translation_examples.txt",
    cot_fewshot => "cot_fewshot.txt",
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn trim_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

fn non_empty<'a>(value: &'a str, what: &'static str) -> Result<&'a str, PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::EmptyInput(what))
    } else {
        Ok(value)
    }
}

impl TemplateSet {
    /// Single-prompt variant: the model writes the simplified query and its
    /// translation in one completion.
    pub fn build_sp_prompt(
        &self,
        s: &SimplifiedSchema,
        question: &str,
        db: &DatabaseSchema,
        descriptions: Option<&Descriptions>,
    ) -> Result<String, PromptError> {
        if s.is_empty() {
            return Err(PromptError::EmptyInput("schema"));
        }
        self.sp.render(&[
            ("schema_block", &render_simplified(s, descriptions)),
            ("question", non_empty(question, "question")?),
            ("original_schema_block", &render_original(db)),
            ("examples_block", &self.translation_examples.text),
        ])
    }

    pub fn build_mp_step1_prompt(
        &self,
        s: &SimplifiedSchema,
        question: &str,
        descriptions: Option<&Descriptions>,
    ) -> Result<String, PromptError> {
        if s.is_empty() {
            return Err(PromptError::EmptyInput("schema"));
        }
        self.mp_step1.render(&[
            ("schema_block", &render_simplified(s, descriptions)),
            ("question", non_empty(question, "question")?),
            ("examples_block", &self.bank_fewshot.text),
        ])
    }

    pub fn build_mp_step2_prompt(
        &self,
        s: &SimplifiedSchema,
        simplified_sql: &str,
        question: &str,
        db: &DatabaseSchema,
    ) -> Result<String, PromptError> {
        self.mp_step2.render(&[
            ("schema_block", &render_simplified(s, None)),
            ("simplified_query", non_empty(simplified_sql, "simplified query")?),
            ("question", non_empty(question, "question")?),
            ("original_schema_block", &render_original(db)),
            ("examples_block", &self.translation_examples.text),
        ])
    }

    /// CoT gets the original schema block; CoT-SS gets the simplified one.
    pub fn build_baseline_prompt(
        &self,
        kind: BaselineKind,
        schema_block: &str,
        question: &str,
    ) -> Result<String, PromptError> {
        let (template, slot) = match kind {
            BaselineKind::Cot => (&self.cot, "original_schema_block"),
            BaselineKind::CotSs => (&self.cot_ss, "schema_block"),
        };
        template.render(&[
            (slot, non_empty(schema_block, "schema")?),
            ("question", non_empty(question, "question")?),
            ("examples_block", &self.cot_fewshot.text),
        ])
    }
}
