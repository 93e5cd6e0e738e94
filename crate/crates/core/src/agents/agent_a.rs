//! Agent A: one whole-document structured query per batch.

use serde_json::{json, Value};

use super::{attribution_schema, column_payload, parse_entries, AgentContext, BatchOutcome, Extractor};
use crate::backend::{
    AgentRole, ContentPart, InvokeError, ModelOutput, ModelRequest, RequestMode, RequestTag, Turn,
};
use crate::docmodel::{render_markdown, ParsedDocument};
use crate::prompts::with_payload;
use crate::schema::ColumnBatch;

pub fn agent_a_output_schema() -> Value {
    json!({
        "type": "object",
        "required": ["extractions"],
        "additionalProperties": false,
        "properties": {
            "extractions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["column_id", "value", "reasoning", "attribution"],
                    "additionalProperties": false,
                    "properties": {
                        "column_id": {"type": "string"},
                        "value": {"type": "string", "minLength": 1},
                        "reasoning": {"type": "string"},
                        "attribution": attribution_schema(true)
                    }
                }
            }
        }
    })
}

fn request(doc: &ParsedDocument, batch: &ColumnBatch, ctx: &AgentContext<'_>, native: bool) -> ModelRequest {
    let instruction = with_payload(
        "Extract the following columns from the document above.",
        &json!({ "columns": column_payload(&batch.columns) }),
    );
    ModelRequest {
        tag: RequestTag {
            doc_id: doc.doc_id.clone(),
            agent: AgentRole::AgentA,
            batch_id: Some(batch.batch_id),
            turn: 0,
        },
        mode: RequestMode::DocumentQuery,
        system_prompt: ctx.prompts.agent_a.clone(),
        turns: vec![Turn::User {
            parts: vec![
                ContentPart::Document {
                    doc_id: doc.doc_id.clone(),
                    markdown: render_markdown(doc),
                    pdf_path: doc.source_pdf.clone().filter(|_| native),
                },
                ContentPart::text(instruction),
            ],
        }],
        tools: vec![],
        output_schema: Some(agent_a_output_schema()),
        temperature: 0.0,
    }
}

/// Extracts every column of `batch` with a single document query.
///
/// The document is re-sent on every call. A hard failure marks every column
/// of the batch as failed.
pub fn run_agent_a(doc: &ParsedDocument, batch: &ColumnBatch, ctx: &AgentContext<'_>) -> BatchOutcome {
    run_document_query(doc, batch, ctx, ctx.backend.accepts_native_documents())
}

/// Agent A restricted to the rendered markdown, even when the backend could
/// read the original file.
pub fn run_parsed_single(doc: &ParsedDocument, batch: &ColumnBatch, ctx: &AgentContext<'_>) -> BatchOutcome {
    run_document_query(doc, batch, ctx, false)
}

fn run_document_query(doc: &ParsedDocument, batch: &ColumnBatch, ctx: &AgentContext<'_>, native: bool) -> BatchOutcome {
    let req = request(doc, batch, ctx, native);
    let parse = |output: &ModelOutput| match output {
        ModelOutput::Structured(v) => parse_entries(&v["extractions"], batch, doc, Extractor::AgentA),
        ModelOutput::ToolCall(_) => Err("expected structured output".to_string()),
    };
    let result = ctx.invoker().invoke_checked(&req, &|o| parse(o).map(|_| ()));
    match result {
        Ok(inv) => BatchOutcome {
            extractions: parse(&inv.output).expect("checked during invocation"),
            turns: 1,
            attempts: inv.attempts,
            error: None,
        },
        Err(InvokeError::InvalidRequest(msg)) => BatchOutcome::failed(batch, Extractor::AgentA, &msg, 0, 0),
        Err(e @ InvokeError::Exhausted { attempts, .. }) => {
            BatchOutcome::failed(batch, Extractor::AgentA, &format!("extraction failed: {e}"), 1, attempts)
        }
    }
}
