//! The two extraction agents and their shared output types.
//!
//! Agent A reads the whole document in one structured call per batch.
//! Agent B starts from the column definitions alone and pulls pages in
//! through retrieval tools, with a per-document cache that keeps any page
//! from being sent twice.

mod agent_a;
mod agent_b;
mod cache;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Invoker, ModelBackend, UsageLedger};
use crate::clock::Clock;
use crate::docmodel::{Modality, ParsedDocument};
use crate::prompts::PromptSet;
use crate::schema::{ColumnBatch, ColumnDef};
use crate::text::{is_not_reported, NOT_REPORTED};

pub use agent_a::{agent_a_output_schema, run_agent_a, run_parsed_single};
pub use agent_b::{
    agent_b_tools, handle_tool_call, run_agent_b, AgentBSession, ToolContext, ToolResult, DEFAULT_MAX_TURNS,
    GET_CHUNKS_BY_PAGE, SEARCH_CHUNKS, SUBMIT_EXTRACTION,
};
pub use cache::{cache_pointer, CacheStats, PageTransmission, SessionCache};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub page: u32,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbatim_quote: Option<String>,
}

impl Attribution {
    pub fn normalized(&self) -> Attribution {
        Attribution {
            verbatim_quote: None,
            ..self.clone()
        }
    }

    pub fn same_location(&self, other: &Attribution) -> bool {
        self.page == other.page && self.modality == other.modality
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    AgentA,
    AgentB,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub column_id: String,
    pub value: String,
    pub reasoning: String,
    pub attribution: Option<Attribution>,
    pub agent: Extractor,
    pub failed: bool,
}

impl Extraction {
    /// Sentinel extraction for a column the agent could not produce.
    pub fn failure(column_id: &str, agent: Extractor, reason: impl Into<String>) -> Self {
        Self {
            column_id: column_id.to_string(),
            value: NOT_REPORTED.to_string(),
            reasoning: reason.into(),
            attribution: None,
            agent,
            failed: true,
        }
    }

    /// A value other than the sentinel from a successful extraction.
    pub fn is_reported(&self) -> bool {
        !self.failed && !is_not_reported(&self.value)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.value.trim().is_empty() {
            return Err(format!("{}: value is empty", self.column_id));
        }
        if self.is_reported() && self.attribution.is_none() {
            return Err(format!("{}: reported value has no attribution", self.column_id));
        }
        if let Some(a) = &self.attribution {
            if a.page == 0 {
                return Err(format!("{}: attribution page must be at least 1", self.column_id));
            }
        }
        Ok(())
    }
}

/// Extractions for one batch plus the call counts the agent observed.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub extractions: Vec<Extraction>,
    /// Model turns taken, each possibly retried.
    pub turns: u32,
    /// Backend calls made, retries included.
    pub attempts: u32,
    pub error: Option<String>,
}

impl BatchOutcome {
    pub fn retries(&self) -> u32 {
        self.attempts - self.turns
    }

    fn failed(batch: &ColumnBatch, agent: Extractor, reason: &str, turns: u32, attempts: u32) -> Self {
        Self {
            extractions: batch
                .columns
                .iter()
                .map(|c| Extraction::failure(&c.id, agent, reason))
                .collect(),
            turns,
            attempts,
            error: Some(reason.to_string()),
        }
    }
}

/// Everything an agent needs to talk to a backend.
pub struct AgentContext<'a> {
    pub backend: &'a dyn ModelBackend,
    pub ledger: &'a UsageLedger,
    pub clock: &'a dyn Clock,
    pub prompts: &'a PromptSet,
    pub retry_limit: u32,
}

impl AgentContext<'_> {
    pub fn invoker(&self) -> Invoker<'_> {
        Invoker {
            backend: self.backend,
            ledger: self.ledger,
            clock: self.clock,
            retry_limit: self.retry_limit,
        }
    }
}

pub(crate) fn column_payload(columns: &[ColumnDef]) -> Value {
    Value::Array(
        columns
            .iter()
            .map(|c| json!({"id": c.id, "name": c.name, "definition": c.definition, "category": c.category}))
            .collect(),
    )
}

pub(crate) fn attribution_schema(quote_required: bool) -> Value {
    let mut required = vec!["page", "modality"];
    let mut quote = json!({"type": "string"});
    if quote_required {
        required.push("verbatim_quote");
        quote = json!({"type": "string", "minLength": 1});
    }
    json!({
        "anyOf": [
            {"type": "null"},
            {
                "type": "object",
                "required": required,
                "additionalProperties": false,
                "properties": {
                    "page": {"type": "integer", "minimum": 1},
                    "modality": {"enum": ["text", "table", "figure"]},
                    "verbatim_quote": quote
                }
            }
        ]
    })
}

#[derive(Deserialize)]
struct RawEntry {
    column_id: String,
    value: String,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    attribution: Option<Attribution>,
}

/// Turns submitted entries into one extraction per batch column, in batch
/// order. Fails when a column is missing, repeated or unknown, when a
/// reported value lacks attribution, or when a cited page is out of range.
pub(crate) fn parse_entries(
    entries: &Value,
    batch: &ColumnBatch,
    doc: &ParsedDocument,
    agent: Extractor,
) -> Result<Vec<Extraction>, String> {
    let raw: Vec<RawEntry> =
        serde_json::from_value(entries.clone()).map_err(|e| format!("entries are malformed: {e}"))?;
    let wanted: HashSet<&str> = batch.columns.iter().map(|c| c.id.as_str()).collect();
    let mut by_id: BTreeMap<String, RawEntry> = BTreeMap::new();
    let mut problems = Vec::new();
    for entry in raw {
        if !wanted.contains(entry.column_id.as_str()) {
            problems.push(format!("unknown column `{}`", entry.column_id));
        } else if by_id.contains_key(&entry.column_id) {
            problems.push(format!("column `{}` appears more than once", entry.column_id));
        } else {
            by_id.insert(entry.column_id.clone(), entry);
        }
    }
    let mut out = Vec::with_capacity(batch.columns.len());
    for column in &batch.columns {
        let Some(entry) = by_id.remove(&column.id) else {
            problems.push(format!("missing column `{}`", column.id));
            continue;
        };
        let value = entry.value.trim().to_string();
        if value.is_empty() {
            problems.push(format!("column `{}` has an empty value", column.id));
            continue;
        }
        let attribution = match entry.attribution {
            Some(a) if a.page == 0 || a.page > doc.n_pages => {
                problems.push(format!(
                    "column `{}` cites page {} outside 1..={}",
                    column.id, a.page, doc.n_pages
                ));
                continue;
            }
            Some(a) if agent == Extractor::AgentB => Some(a.normalized()),
            other => other,
        };
        let reported = !is_not_reported(&value);
        if reported && attribution.is_none() {
            problems.push(format!("column `{}` reports a value without attribution", column.id));
            continue;
        }
        if reported
            && agent == Extractor::AgentA
            && attribution
                .as_ref()
                .and_then(|a| a.verbatim_quote.as_deref())
                .is_none_or(|q| q.trim().is_empty())
        {
            problems.push(format!("column `{}` needs a verbatim quote", column.id));
            continue;
        }
        out.push(Extraction {
            column_id: column.id.clone(),
            value: if reported { value } else { NOT_REPORTED.to_string() },
            reasoning: entry.reasoning,
            attribution: if reported { attribution } else { None },
            agent,
            failed: false,
        });
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(problems.join("; "))
    }
}
