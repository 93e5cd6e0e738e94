//! Deterministic offline backend that imitates each agent's behavior.
//!
//! Values are read from labeled evidence in the rendered document: a text
//! or figure line `Label: value`, or a table row whose first cell is the
//! label. The two extraction roles read that evidence differently so the
//! reconciler has real disagreements to settle:
//!
//! * Agent A takes the first occurrence in any modality and, for tables,
//!   only the first value cell.
//! * Agent B skips figures, takes the last occurrence in page order among
//!   the pages its tools returned, and joins all value cells of a table row.
//! * The reconciler treats the first table occurrence on a disputed page
//!   as authoritative, falling back to the first occurrence.
//! * The judge accepts when one word set contains the other.
//!
//! Replies carry no usage, so the ledger falls back to whitespace counts.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{
    extract_json_payload, AgentRole, ContentPart, ModelBackend, ModelRequest, RawOutput, RawReply, RequestMode,
    TransportError, Turn,
};
use crate::docmodel::{parse_marked_blocks, parse_pipe_table, MarkedBlock, Modality};
use crate::text::{is_not_reported, normalize_whitespace, word_set, NOT_REPORTED};

#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }
}

/// One place a label's value appears.
#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub page: u32,
    pub modality: Modality,
    pub cells: Vec<String>,
    pub quote: String,
}

impl Occurrence {
    fn joined(&self) -> String {
        self.cells.join(" ")
    }
}

/// Every occurrence of `label` in `blocks`, in block order.
pub fn find_occurrences(blocks: &[MarkedBlock], label: &str) -> Vec<Occurrence> {
    let label = label.trim().to_lowercase();
    let mut out = Vec::new();
    for block in blocks {
        match block.modality {
            Modality::Table => {
                let Some(grid) = parse_pipe_table(&block.content) else {
                    continue;
                };
                for row in &grid.rows {
                    let Some(first) = row.first() else { continue };
                    if first.trim().to_lowercase() != label {
                        continue;
                    }
                    let cells: Vec<String> = row[1..]
                        .iter()
                        .map(|c| c.trim().to_string())
                        .filter(|c| !c.is_empty())
                        .collect();
                    if !cells.is_empty() {
                        out.push(Occurrence {
                            page: block.page,
                            modality: Modality::Table,
                            cells,
                            quote: row.join(" | "),
                        });
                    }
                }
            }
            Modality::Text | Modality::Figure => {
                for line in block.content.lines() {
                    let trimmed = line.trim();
                    let Some((head, rest)) = trimmed.split_once(':') else {
                        continue;
                    };
                    if head.trim().to_lowercase() == label && !rest.trim().is_empty() {
                        out.push(Occurrence {
                            page: block.page,
                            modality: block.modality,
                            cells: vec![rest.trim().to_string()],
                            quote: trimmed.to_string(),
                        });
                    }
                }
            }
        }
    }
    out
}

fn collect_strings(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                match child {
                    Value::String(s) if k == "content" || k == "text" => out.push(s.clone()),
                    _ => collect_strings(child, out),
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|i| collect_strings(i, out)),
        _ => {}
    }
}

fn tool_blocks<'a>(turns: impl Iterator<Item = &'a Turn>, tool: Option<&str>) -> Vec<MarkedBlock> {
    let mut blocks = Vec::new();
    for turn in turns {
        if let Turn::Tool {
            parts, name, is_error, ..
        } = turn
        {
            if *is_error || tool.is_some_and(|t| t != name) {
                continue;
            }
            for part in parts {
                if let ContentPart::Text { text } = part {
                    let mut strings = Vec::new();
                    match serde_json::from_str::<Value>(text) {
                        Ok(v) => collect_strings(&v, &mut strings),
                        Err(_) => strings.push(text.clone()),
                    }
                    for s in strings {
                        blocks.extend(parse_marked_blocks(&s));
                    }
                }
            }
        }
    }
    blocks
}

fn text_reply(v: Value) -> RawReply {
    RawReply {
        output: RawOutput::Text(v.to_string()),
        usage: None,
    }
}

fn call_reply(request: &ModelRequest, name: &str, arguments: Value) -> RawReply {
    RawReply {
        output: RawOutput::ToolCall {
            id: Some(format!(
                "mock-b{}-t{}",
                request.tag.batch_id.map_or(-1, |b| b as i64),
                request.tag.turn
            )),
            name: name.to_string(),
            arguments,
        },
        usage: None,
    }
}

fn payload(text: Option<String>) -> Result<Value, TransportError> {
    text.as_deref()
        .and_then(extract_json_payload)
        .ok_or_else(|| TransportError::fatal("mock backend found no JSON payload in the prompt"))
}

fn columns(payload: &Value) -> Vec<(String, String)> {
    payload
        .get("columns")
        .and_then(Value::as_array)
        .map(|cols| {
            cols.iter()
                .filter_map(|c| {
                    Some((
                        c.get("id")?.as_str()?.to_string(),
                        c.get("name")?.as_str()?.to_string(),
                    ))
                })
                .collect()
        })
        .unwrap_or_default()
}

impl MockBackend {
    fn agent_a(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let markdown = request
            .turns
            .iter()
            .find_map(|t| match t {
                Turn::User { parts } => parts.iter().find_map(|p| match p {
                    ContentPart::Document { markdown, .. } => Some(markdown.clone()),
                    _ => None,
                }),
                _ => None,
            })
            .unwrap_or_default();
        let blocks = parse_marked_blocks(&markdown);
        let payload = payload(request.last_user_text())?;
        let extractions: Vec<Value> = columns(&payload)
            .into_iter()
            .map(|(id, name)| match find_occurrences(&blocks, &name).first() {
                Some(o) => json!({
                    "column_id": id,
                    "value": o.cells[0],
                    "reasoning": format!("{name} is stated on page {} ({}).", o.page, o.modality),
                    "attribution": {"page": o.page, "modality": o.modality, "verbatim_quote": o.quote},
                }),
                None => json!({
                    "column_id": id,
                    "value": NOT_REPORTED,
                    "reasoning": format!("{name} does not appear in the document."),
                    "attribution": null,
                }),
            })
            .collect();
        Ok(text_reply(json!({ "extractions": extractions })))
    }

    fn agent_b(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        // the session spans batches; this batch starts at its latest payload turn
        let start = request
            .turns
            .iter()
            .rposition(|t| match t {
                Turn::User { parts } => parts.iter().any(|p| matches!(p, ContentPart::Text { text } if text.contains("\"batch_id\""))),
                _ => false,
            })
            .ok_or_else(|| TransportError::fatal("mock backend found no batch payload"))?;
        let payload = payload(match &request.turns[start] {
            Turn::User { parts } => parts.iter().find_map(|p| match p {
                ContentPart::Text { text } => Some(text.clone()),
                _ => None,
            }),
            _ => None,
        })?;
        let cols = columns(&payload);
        let n_pages = payload.get("n_pages").and_then(Value::as_u64).unwrap_or(1) as u32;
        let mut blocks: Vec<MarkedBlock> = tool_blocks(request.turns.iter(), None)
            .into_iter()
            .filter(|b| b.modality != Modality::Figure)
            .collect();
        // page order, not retrieval order, so "last" does not depend on ranking
        blocks.sort_by_key(|b| b.page);
        let mut seen = BTreeSet::new();
        blocks.retain(|b| seen.insert((b.page, b.chunk_id.clone())));
        let found: Vec<(String, String, Option<Occurrence>)> = cols
            .iter()
            .map(|(id, name)| (id.clone(), name.clone(), find_occurrences(&blocks, name).pop()))
            .collect();
        let called = |tool: &str| {
            request.turns[start..]
                .iter()
                .any(|t| matches!(t, Turn::Assistant { call } if call.name == tool))
        };
        let unresolved: Vec<&str> = found
            .iter()
            .filter(|(_, _, o)| o.is_none())
            .map(|(_, n, _)| n.as_str())
            .collect();
        if !unresolved.is_empty() && !called("search_chunks") {
            return Ok(call_reply(request, "search_chunks", json!({"query": unresolved.join(" ")})));
        }
        if !unresolved.is_empty() && !called("get_chunks_by_page") {
            let pages: Vec<u32> = (1..=n_pages).collect();
            return Ok(call_reply(request, "get_chunks_by_page", json!({"pages": pages})));
        }
        let entries: Vec<Value> = found
            .into_iter()
            .map(|(id, name, occ)| match occ {
                Some(o) => json!({
                    "column_id": id,
                    "value": o.joined(),
                    "reasoning": format!("{name} found on page {}.", o.page),
                    "attribution": {"page": o.page, "modality": o.modality},
                }),
                None => json!({
                    "column_id": id,
                    "value": NOT_REPORTED,
                    "reasoning": format!("No passage mentions {name}."),
                    "attribution": null,
                }),
            })
            .collect();
        Ok(call_reply(request, "submit_extraction", json!({ "entries": entries })))
    }

    fn reconciler(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let first_user = request.turns.iter().find_map(|t| match t {
            Turn::User { parts } => parts.iter().find_map(|p| match p {
                ContentPart::Text { text } => Some(text.clone()),
                _ => None,
            }),
            _ => None,
        });
        let payload = payload(first_user)?;
        let conflicts = payload
            .get("conflicts")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let fetched: BTreeSet<u32> = request
            .turns
            .iter()
            .filter_map(|t| match t {
                Turn::Assistant { call } if call.name == "get_page" => {
                    call.arguments.get("page").and_then(Value::as_u64).map(|p| p as u32)
                }
                _ => None,
            })
            .collect();
        let disputed: BTreeSet<u32> = conflicts
            .iter()
            .flat_map(|c| {
                c.get("disputed_pages")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter_map(|p| p.as_u64().map(|p| p as u32))
            })
            .collect();
        if let Some(page) = disputed.difference(&fetched).next() {
            return Ok(call_reply(request, "get_page", json!({"page": page})));
        }

        let blocks = tool_blocks(request.turns.iter(), Some("get_page"));
        let entries: Vec<Value> = conflicts.iter().map(|c| verify_conflict(c, &blocks)).collect();
        Ok(call_reply(request, "submit_verification", json!({ "entries": entries })))
    }

    fn judge(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let payload = payload(request.last_user_text())?;
        let field = |k: &str| payload.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let (pred, gold) = (word_set(&field("prediction")), word_set(&field("gold")));
        let correct = !pred.is_empty() && !gold.is_empty() && (pred.is_subset(&gold) || gold.is_subset(&pred));
        Ok(text_reply(json!({
            "verdict": if correct { "correct" } else { "incorrect" },
            "rationale": if correct { "word sets overlap fully" } else { "word sets differ" },
        })))
    }
}

fn verify_conflict(conflict: &Value, blocks: &[MarkedBlock]) -> Value {
    let column_id = conflict.get("column_id").cloned().unwrap_or(Value::Null);
    let name = conflict.get("column_name").and_then(Value::as_str).unwrap_or_default();
    let pages: BTreeSet<u32> = conflict
        .get("disputed_pages")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(|p| p.as_u64().map(|p| p as u32))
        .collect();
    let candidate = |key: &str| -> Option<String> {
        let c = conflict.get(key)?;
        if c.get("failed").and_then(Value::as_bool).unwrap_or(false) {
            return None;
        }
        c.get("value").and_then(Value::as_str).map(str::to_string)
    };
    let (a, b) = (candidate("candidate_a"), candidate("candidate_b"));
    let on_pages: Vec<MarkedBlock> = blocks.iter().filter(|b| pages.contains(&b.page)).cloned().collect();
    let occurrences = find_occurrences(&on_pages, name);
    let authority = occurrences
        .iter()
        .find(|o| o.modality == Modality::Table)
        .or(occurrences.first());

    let (a_ok, b_ok) = match authority {
        Some(o) => {
            let joined = normalize_whitespace(&o.joined());
            let supports = |v: &Option<String>| {
                v.as_ref().is_some_and(|v| {
                    let v = normalize_whitespace(v);
                    v == joined || o.cells.iter().any(|c| normalize_whitespace(c) == v)
                })
            };
            (supports(&a), supports(&b))
        }
        None => {
            let absent = |v: &Option<String>| v.as_deref().is_some_and(is_not_reported);
            (absent(&a), absent(&b))
        }
    };
    let label = match (a_ok, b_ok) {
        (true, true) => "both_correct",
        (true, false) => "a_correct_b_wrong",
        (false, true) => "b_correct_a_wrong",
        (false, false) => "both_wrong",
    };
    let mut entry = json!({
        "column_id": column_id,
        "label": label,
        "reasoning": match authority {
            Some(o) => format!("Page {} ({}) states {}: {}.", o.page, o.modality, name, o.joined()),
            None => format!("The disputed pages do not mention {name}."),
        },
    });
    if let (Some(o), "both_wrong") = (authority, label) {
        entry["corrected_value"] = json!(o.joined());
        entry["attribution"] = json!({"page": o.page, "modality": o.modality});
    }
    entry
}

impl ModelBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        match (request.tag.agent, request.mode) {
            (AgentRole::AgentA, RequestMode::DocumentQuery) => self.agent_a(request),
            (AgentRole::AgentB, RequestMode::ToolLoop) => self.agent_b(request),
            (AgentRole::Reconciler, RequestMode::ToolLoop) => self.reconciler(request),
            (_, RequestMode::Judge) => self.judge(request),
            (agent, mode) => Err(TransportError::fatal(format!(
                "mock backend has no behavior for {} in {mode:?} mode",
                agent.as_str()
            ))),
        }
    }
}
