//! Generative-model abstraction.
//!
//! Every call goes through [`Invoker`], which validates the request, checks
//! the reply against the declared output schema or tool list, retries on
//! invalid output, and appends one [`UsageRecord`] per call to the ledger.
//! Backends themselves only move bytes.

mod http;
mod invoke;
mod ledger;
pub mod mock;
mod registry;
mod scripted;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use http::{parse_chat_response, OpenAiCompatBackend};
pub use invoke::{extract_json_payload, AttemptFailure, Invocation, InvokeError, Invoker, DEFAULT_RETRY_LIMIT};
pub use ledger::{ledger_report, CallOutcome, LedgerReport, UsageLedger, UsageRecord, UsageTotals};
pub use registry::{build_backend, BackendConfig, RegistryError, Throttled};
pub use scripted::{FnBackend, ScriptedBackend};

/// Who issued a model call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    AgentA,
    AgentB,
    Reconciler,
    Judge,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::AgentA,
        AgentRole::AgentB,
        AgentRole::Reconciler,
        AgentRole::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::AgentA => "agent_a",
            AgentRole::AgentB => "agent_b",
            AgentRole::Reconciler => "reconciler",
            AgentRole::Judge => "judge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    DocumentQuery,
    ToolLoop,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text {
        text: String,
    },
    /// Whole document. Backends without native document support read `markdown`.
    Document {
        doc_id: String,
        markdown: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pdf_path: Option<String>,
    },
    Image {
        reference: String,
    },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON Schema for the call arguments.
    pub parameters: Value,
}

/// One conversation turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Turn {
    User {
        parts: Vec<ContentPart>,
    },
    Assistant {
        call: ToolCall,
    },
    Tool {
        call_id: String,
        name: String,
        parts: Vec<ContentPart>,
        is_error: bool,
    },
}

impl Turn {
    pub fn user_text(text: impl Into<String>) -> Self {
        Turn::User {
            parts: vec![ContentPart::text(text)],
        }
    }
}

/// Identifies a call for the ledger; orders records deterministically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTag {
    pub doc_id: String,
    pub agent: AgentRole,
    pub batch_id: Option<usize>,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub tag: RequestTag,
    pub mode: RequestMode,
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<ToolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<Value>,
    pub temperature: f64,
}

impl ModelRequest {
    /// Checks the structural invariants every request must satisfy.
    pub fn validate(&self) -> Result<(), String> {
        let has_document = self.turns.iter().any(|t| match t {
            Turn::User { parts } | Turn::Tool { parts, .. } => parts
                .iter()
                .any(|p| matches!(p, ContentPart::Document { .. })),
            Turn::Assistant { .. } => false,
        });
        if has_document && self.mode != RequestMode::DocumentQuery {
            return Err("document parts are only allowed in document_query mode".into());
        }
        if self.tag.agent != AgentRole::Judge && self.temperature != 0.0 {
            return Err(format!(
                "{} calls must use temperature 0, got {}",
                self.tag.agent.as_str(),
                self.temperature
            ));
        }
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = self.tools.iter().find(|t| !names.insert(t.name.as_str())) {
            return Err(format!("tool `{}` declared twice", dup.name));
        }
        match self.mode {
            RequestMode::ToolLoop if self.tools.is_empty() => {
                Err("tool_loop requests must declare tools".into())
            }
            RequestMode::DocumentQuery | RequestMode::Judge if self.output_schema.is_none() => {
                Err("structured requests must declare an output schema".into())
            }
            _ => Ok(()),
        }
    }

    pub fn last_user_text(&self) -> Option<String> {
        self.turns.iter().rev().find_map(|t| match t {
            Turn::User { parts } => Some(
                parts
                    .iter()
                    .filter_map(|p| match p {
                        ContentPart::Text { text } => Some(text.as_str()),
                        _ => None,
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub input: u64,
    pub output: u64,
}

/// Unvalidated backend reply.
#[derive(Debug, Clone, PartialEq)]
pub enum RawOutput {
    Text(String),
    ToolCall {
        id: Option<String>,
        name: String,
        arguments: Value,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawReply {
    pub output: RawOutput,
    /// Provider-reported usage; `None` falls back to whitespace token counts.
    pub usage: Option<TokenCounts>,
}

/// Validated backend reply.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Structured(Value),
    ToolCall(ToolCall),
}

#[derive(Debug, Clone, Error)]
#[error("transport failure: {message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Whether document parts can be sent as native files rather than markdown.
    fn accepts_native_documents(&self) -> bool {
        false
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError>;
}

fn whitespace_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

/// Whitespace token count of everything a request sends.
pub fn count_request_tokens(request: &ModelRequest) -> u64 {
    let parts_tokens = |parts: &[ContentPart]| -> u64 {
        parts
            .iter()
            .map(|p| match p {
                ContentPart::Text { text } => whitespace_tokens(text),
                ContentPart::Document { markdown, .. } => whitespace_tokens(markdown),
                ContentPart::Image { .. } => 1,
            })
            .sum()
    };
    let mut total = whitespace_tokens(&request.system_prompt);
    for turn in &request.turns {
        total += match turn {
            Turn::User { parts } | Turn::Tool { parts, .. } => parts_tokens(parts),
            Turn::Assistant { call } => 1 + whitespace_tokens(&call.arguments.to_string()),
        };
    }
    for tool in &request.tools {
        total += whitespace_tokens(&tool.description) + 1;
    }
    total
}

/// Whitespace token count of a reply.
pub fn count_output_tokens(output: &RawOutput) -> u64 {
    match output {
        RawOutput::Text(t) => whitespace_tokens(t),
        RawOutput::ToolCall { arguments, .. } => {
            1 + whitespace_tokens(&serde_json::to_string_pretty(arguments).unwrap_or_default())
        }
    }
}
