//! Agent B: retrieval-guided tool loop over the parsed document.

use serde_json::{json, Value};

use super::{attribution_schema, column_payload, parse_entries, AgentContext, BatchOutcome, Extraction, Extractor, SessionCache};
use crate::backend::{AgentRole, ContentPart, ModelOutput, ModelRequest, RequestMode, RequestTag, ToolCall, ToolSpec, Turn};
use crate::docmodel::{get_page, ParsedDocument};
use crate::prompts::with_payload;
use crate::retrieval::{search, DocumentIndex, EmbeddingProvider, DEFAULT_TOP_K};
use crate::schema::ColumnBatch;

pub const SEARCH_CHUNKS: &str = "search_chunks";
pub const GET_CHUNKS_BY_PAGE: &str = "get_chunks_by_page";
pub const SUBMIT_EXTRACTION: &str = "submit_extraction";
/// Model turns allowed per batch before unresolved columns are failed.
pub const DEFAULT_MAX_TURNS: u32 = 12;

pub fn agent_b_tools() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: SEARCH_CHUNKS.into(),
            description: "Semantic search over document pages; returns the most relevant pages with full text.".into(),
            parameters: json!({
                "type": "object",
                "required": ["query"],
                "additionalProperties": false,
                "properties": {"query": {"type": "string", "minLength": 1}}
            }),
        },
        ToolSpec {
            name: GET_CHUNKS_BY_PAGE.into(),
            description: "Returns the full text of the requested pages.".into(),
            parameters: json!({
                "type": "object",
                "required": ["pages"],
                "additionalProperties": false,
                "properties": {
                    "pages": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}}
                }
            }),
        },
        ToolSpec {
            name: SUBMIT_EXTRACTION.into(),
            description: "Submits one entry per batch column and ends the batch.".into(),
            parameters: json!({
                "type": "object",
                "required": ["entries"],
                "additionalProperties": false,
                "properties": {
                    "entries": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["column_id", "value", "reasoning", "attribution"],
                            "additionalProperties": false,
                            "properties": {
                                "column_id": {"type": "string"},
                                "value": {"type": "string", "minLength": 1},
                                "reasoning": {"type": "string"},
                                "attribution": attribution_schema(false)
                            }
                        }
                    }
                }
            }),
        },
    ]
}

/// Read-only document state plus the session cache the tools update.
pub struct ToolContext<'a> {
    pub doc: &'a ParsedDocument,
    pub index: &'a DocumentIndex,
    pub embedder: &'a dyn EmbeddingProvider,
    pub cache: &'a SessionCache,
    pub top_k: usize,
}

impl<'a> ToolContext<'a> {
    pub fn new(
        doc: &'a ParsedDocument,
        index: &'a DocumentIndex,
        embedder: &'a dyn EmbeddingProvider,
        cache: &'a SessionCache,
    ) -> Self {
        Self {
            doc,
            index,
            embedder,
            cache,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToolResult {
    Payload(Value),
    /// Returned to the model; the loop continues.
    Error(String),
    Submitted(Vec<Extraction>),
}

pub fn handle_tool_call(call: &ToolCall, batch: &ColumnBatch, ctx: &ToolContext<'_>) -> ToolResult {
    match call.name.as_str() {
        SEARCH_CHUNKS => {
            let Some(query) = call.arguments.get("query").and_then(Value::as_str).filter(|q| !q.trim().is_empty())
            else {
                return ToolResult::Error("search_chunks needs a non-empty `query`".into());
            };
            match search(ctx.index, query, ctx.embedder, ctx.top_k) {
                Ok(hits) => ToolResult::Payload(json!({
                    "hits": hits
                        .iter()
                        .map(|h| json!({"page": h.page, "score": h.score, "content": ctx.cache.claim(h.page, &h.content)}))
                        .collect::<Vec<_>>()
                })),
                Err(e) => ToolResult::Error(format!("search failed: {e}")),
            }
        }
        GET_CHUNKS_BY_PAGE => {
            let pages: Option<Vec<u32>> = call
                .arguments
                .get("pages")
                .and_then(Value::as_array)
                .and_then(|ps| ps.iter().map(|p| p.as_u64().and_then(|p| u32::try_from(p).ok())).collect());
            let Some(pages) = pages.filter(|p| !p.is_empty()) else {
                return ToolResult::Error("get_chunks_by_page needs a non-empty integer array `pages`".into());
            };
            if let Some(bad) = pages.iter().find(|p| **p == 0 || **p > ctx.doc.n_pages) {
                return ToolResult::Error(format!("page {bad} is out of range 1..={}", ctx.doc.n_pages));
            }
            let mut out = Vec::with_capacity(pages.len());
            for page in pages {
                let view = get_page(ctx.doc, page).expect("range checked above");
                out.push(json!({"page": page, "content": ctx.cache.claim(page, &view.text)}));
            }
            ToolResult::Payload(json!({ "pages": out }))
        }
        SUBMIT_EXTRACTION => match parse_entries(&call.arguments["entries"], batch, ctx.doc, Extractor::AgentB) {
            Ok(extractions) => ToolResult::Submitted(extractions),
            Err(e) => ToolResult::Error(format!("submission rejected: {e}")),
        },
        other => ToolResult::Error(format!("unknown tool `{other}`")),
    }
}

/// One Agent-B conversation for a document. Batches run one after another
/// in the same transcript, so cache pointers always refer to content the
/// model has already been shown.
pub struct AgentBSession<'a> {
    tools: ToolContext<'a>,
    transcript: Vec<Turn>,
    pub max_turns: u32,
}

impl<'a> AgentBSession<'a> {
    pub fn new(tools: ToolContext<'a>) -> Self {
        Self {
            tools,
            transcript: Vec::new(),
            max_turns: DEFAULT_MAX_TURNS,
        }
    }

    pub fn transcript(&self) -> &[Turn] {
        &self.transcript
    }

    pub fn run_batch(&mut self, batch: &ColumnBatch, ctx: &AgentContext<'_>) -> BatchOutcome {
        let doc = self.tools.doc;
        self.transcript.push(Turn::user_text(with_payload(
            "Extract the following columns. Use the tools to read the document.",
            &json!({
                "batch_id": batch.batch_id,
                "title": doc.title,
                "n_pages": doc.n_pages,
                "columns": column_payload(&batch.columns),
            }),
        )));
        let invoker = ctx.invoker();
        let (mut turns, mut attempts) = (0, 0);
        while turns < self.max_turns {
            let request = ModelRequest {
                tag: RequestTag {
                    doc_id: doc.doc_id.clone(),
                    agent: AgentRole::AgentB,
                    batch_id: Some(batch.batch_id),
                    turn: turns,
                },
                mode: RequestMode::ToolLoop,
                system_prompt: ctx.prompts.agent_b.clone(),
                turns: self.transcript.clone(),
                tools: agent_b_tools(),
                output_schema: None,
                temperature: 0.0,
            };
            turns += 1;
            let invocation = match invoker.invoke(&request) {
                Ok(inv) => inv,
                Err(e) => {
                    if let crate::backend::InvokeError::Exhausted { attempts: n, .. } = &e {
                        attempts += n;
                    }
                    return BatchOutcome::failed(batch, Extractor::AgentB, &format!("extraction failed: {e}"), turns, attempts);
                }
            };
            attempts += invocation.attempts;
            let ModelOutput::ToolCall(call) = invocation.output else {
                unreachable!("tool_loop output is validated as a tool call")
            };
            self.transcript.push(Turn::Assistant { call: call.clone() });
            let (payload, is_error, done) = match handle_tool_call(&call, batch, &self.tools) {
                ToolResult::Payload(v) => (v, false, None),
                ToolResult::Error(message) => (json!({ "error": message }), true, None),
                ToolResult::Submitted(extractions) => (
                    json!({"status": "accepted", "entries": extractions.len()}),
                    false,
                    Some(extractions),
                ),
            };
            self.transcript.push(Turn::Tool {
                call_id: call.id.clone(),
                name: call.name.clone(),
                parts: vec![ContentPart::text(payload.to_string())],
                is_error,
            });
            if let Some(extractions) = done {
                return BatchOutcome {
                    extractions,
                    turns,
                    attempts,
                    error: None,
                };
            }
        }
        BatchOutcome::failed(
            batch,
            Extractor::AgentB,
            &format!("extraction failed: no submission within {} turns", self.max_turns),
            turns,
            attempts,
        )
    }
}

/// Runs one batch in a fresh session.
pub fn run_agent_b(batch: &ColumnBatch, tools: ToolContext<'_>, ctx: &AgentContext<'_>) -> BatchOutcome {
    AgentBSession::new(tools).run_batch(batch, ctx)
}
