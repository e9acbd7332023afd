//! Two-stage multi-table text-to-SQL: schema flattening, prompt
//! construction, LLM record/replay, identifier repair and benchmark scoring.

pub mod correction;
pub mod dataset;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod run;
pub mod schema;
pub mod sqlref;
