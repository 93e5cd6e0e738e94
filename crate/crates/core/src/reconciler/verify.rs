//! Pass 2: model verification with forced page inspection.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{inputs_of, CellInputs, Correction, Pass, ReconciledCell, VerificationLabel};
use crate::agents::{AgentContext, Attribution, Extraction};
use crate::backend::{AgentRole, ContentPart, InvokeError, ModelOutput, ModelRequest, RequestMode, RequestTag, ToolSpec, Turn};
use crate::docmodel::{get_page, ParsedDocument};
use crate::prompts::with_payload;
use crate::schema::ColumnDef;
use crate::text::{is_strict_token_superset, NOT_REPORTED};

pub const GET_PAGE: &str = "get_page";
pub const SUBMIT_VERIFICATION: &str = "submit_verification";

pub fn reconciler_tools() -> Vec<ToolSpec> {
    let labels: Vec<&str> = VerificationLabel::ALL.iter().map(|l| l.as_str()).collect();
    vec![
        ToolSpec {
            name: GET_PAGE.into(),
            description: "Returns the full parsed text of one page and its rendered image when available.".into(),
            parameters: json!({
                "type": "object",
                "required": ["page"],
                "additionalProperties": false,
                "properties": {"page": {"type": "integer", "minimum": 1}}
            }),
        },
        ToolSpec {
            name: SUBMIT_VERIFICATION.into(),
            description: "Submits one verification label per conflict.".into(),
            parameters: json!({
                "type": "object",
                "required": ["entries"],
                "additionalProperties": false,
                "properties": {
                    "entries": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["column_id", "label", "reasoning"],
                            "additionalProperties": false,
                            "properties": {
                                "column_id": {"type": "string"},
                                "label": {"enum": labels},
                                "reasoning": {"type": "string"},
                                "corrected_value": {"type": "string", "minLength": 1},
                                "attribution": {
                                    "type": "object",
                                    "required": ["page", "modality"],
                                    "additionalProperties": false,
                                    "properties": {
                                        "page": {"type": "integer", "minimum": 1},
                                        "modality": {"enum": ["text", "table", "figure"]},
                                        "verbatim_quote": {"type": "string"}
                                    }
                                }
                            }
                        }
                    }
                }
            }),
        },
    ]
}

/// One escalated column.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub column: ColumnDef,
    pub a: Extraction,
    pub b: Extraction,
    /// Pages cited by either candidate.
    pub disputed_pages: BTreeSet<u32>,
}

impl Conflict {
    pub fn new(column: ColumnDef, a: Extraction, b: Extraction) -> Self {
        let disputed_pages = [&a, &b]
            .iter()
            .filter(|e| !e.failed)
            .filter_map(|e| e.attribution.as_ref().map(|at| at.page))
            .collect();
        Self {
            column,
            a,
            b,
            disputed_pages,
        }
    }

    fn payload(&self) -> Value {
        let candidate = |e: &Extraction| {
            json!({
                "value": e.value,
                "reasoning": e.reasoning,
                "attribution": e.attribution,
                "failed": e.failed,
            })
        };
        json!({
            "column_id": self.column.id,
            "column_name": self.column.name,
            "definition": self.column.definition,
            "disputed_pages": self.disputed_pages,
            "candidate_a": candidate(&self.a),
            "candidate_b": candidate(&self.b),
        })
    }

    fn inputs(&self) -> CellInputs {
        inputs_of(&self.a, &self.b)
    }

    fn both_wrong(&self, reasoning: String) -> ReconciledCell {
        ReconciledCell {
            column_id: self.column.id.clone(),
            final_value: NOT_REPORTED.to_string(),
            label: VerificationLabel::BothWrong,
            attribution: None,
            reconciler_reasoning: reasoning,
            pass: Pass::Pass2,
            rule: None,
            low_confidence: true,
            correction: None,
            verified_without_image: false,
            inputs: self.inputs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyOutcome {
    /// One cell per conflict, in conflict order.
    pub cells: Vec<ReconciledCell>,
    pub invoked: bool,
    pub turns: u32,
    pub attempts: u32,
    pub forced_tool_rejections: u32,
}

#[derive(Deserialize)]
struct Entry {
    column_id: String,
    label: VerificationLabel,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    corrected_value: Option<String>,
    #[serde(default)]
    attribution: Option<Attribution>,
}

fn decide(conflict: &Conflict, entry: Entry, doc: &ParsedDocument) -> ReconciledCell {
    let (a, b) = (&conflict.a, &conflict.b);
    let pick = |e: &Extraction| (e.value.clone(), e.attribution.clone());
    let (final_value, attribution, correction) = match entry.label {
        VerificationLabel::ACorrectBWrong => {
            let (v, at) = pick(a);
            (v, at, None)
        }
        VerificationLabel::BCorrectAWrong => {
            let (v, at) = pick(b);
            (v, at, None)
        }
        VerificationLabel::BothCorrect => {
            let (v, at) = if is_strict_token_superset(&b.value, &a.value) { pick(b) } else { pick(a) };
            (v, at, None)
        }
        VerificationLabel::BothWrong => {
            let correction = entry.corrected_value.map(|value| Correction {
                value,
                attribution: entry.attribution.map(|at| at.normalized()),
            });
            (NOT_REPORTED.to_string(), None, correction)
        }
    };
    let without_image = conflict
        .disputed_pages
        .iter()
        .any(|p| !doc.page_images.contains_key(p));
    ReconciledCell {
        column_id: conflict.column.id.clone(),
        final_value,
        label: entry.label,
        attribution,
        reconciler_reasoning: entry.reasoning,
        pass: Pass::Pass2,
        rule: None,
        low_confidence: entry.label == VerificationLabel::BothWrong,
        correction,
        verified_without_image: without_image,
        inputs: conflict.inputs(),
    }
}

/// Checks a submission against the open conflicts.
fn validate_submission(
    arguments: &Value,
    conflicts: &[&Conflict],
    doc: &ParsedDocument,
) -> Result<BTreeMap<String, Entry>, String> {
    let entries: Vec<Entry> = serde_json::from_value(arguments["entries"].clone())
        .map_err(|e| format!("entries are malformed: {e}"))?;
    let mut by_id = BTreeMap::new();
    let mut problems = Vec::new();
    for entry in entries {
        let Some(conflict) = conflicts.iter().find(|c| c.column.id == entry.column_id) else {
            problems.push(format!("`{}` is not an open conflict", entry.column_id));
            continue;
        };
        if (entry.label == VerificationLabel::ACorrectBWrong && conflict.a.failed)
            || (entry.label == VerificationLabel::BCorrectAWrong && conflict.b.failed)
        {
            problems.push(format!("`{}`: a failed candidate cannot be correct", entry.column_id));
            continue;
        }
        if let Some(at) = &entry.attribution {
            if at.page > doc.n_pages {
                problems.push(format!("`{}` cites page {} outside the document", entry.column_id, at.page));
                continue;
            }
        }
        if by_id.insert(entry.column_id.clone(), entry).is_some() {
            problems.push("a conflict is labeled more than once".to_string());
        }
    }
    for c in conflicts {
        if !by_id.contains_key(&c.column.id) {
            problems.push(format!("missing label for `{}`", c.column.id));
        }
    }
    if problems.is_empty() {
        Ok(by_id)
    } else {
        Err(problems.join("; "))
    }
}

/// Runs one verification loop over all `conflicts` of a batch.
///
/// Conflicts without any cited page become `both_wrong` without a call.
/// A submission is refused until, for every remaining conflict, at least
/// one of its disputed pages has been fetched.
pub fn verify_conflicts(
    batch_id: usize,
    conflicts: &[Conflict],
    doc: &ParsedDocument,
    ctx: &AgentContext<'_>,
    max_turns: u32,
) -> VerifyOutcome {
    let mut outcome = VerifyOutcome::default();
    let mut decided: Vec<Option<ReconciledCell>> = conflicts
        .iter()
        .map(|c| {
            c.disputed_pages.is_empty().then(|| {
                c.both_wrong("Neither candidate cites a page, so there is no evidence to verify.".to_string())
            })
        })
        .collect();
    let open: Vec<&Conflict> = conflicts.iter().filter(|c| !c.disputed_pages.is_empty()).collect();
    if open.is_empty() {
        outcome.cells = decided.into_iter().flatten().collect();
        return outcome;
    }
    outcome.invoked = true;

    let mut transcript = vec![Turn::user_text(with_payload(
        "Verify these conflicting extractions. Read the disputed pages before submitting.",
        &json!({ "conflicts": open.iter().map(|c| c.payload()).collect::<Vec<_>>() }),
    ))];
    let mut fetched: BTreeSet<u32> = BTreeSet::new();
    let invoker = ctx.invoker();
    let mut failure = None;
    let mut submitted = None;
    while outcome.turns < max_turns {
        let request = ModelRequest {
            tag: RequestTag {
                doc_id: doc.doc_id.clone(),
                agent: AgentRole::Reconciler,
                batch_id: Some(batch_id),
                turn: outcome.turns,
            },
            mode: RequestMode::ToolLoop,
            system_prompt: ctx.prompts.reconciler.clone(),
            turns: transcript.clone(),
            tools: reconciler_tools(),
            output_schema: None,
            temperature: 0.0,
        };
        outcome.turns += 1;
        let call = match invoker.invoke(&request) {
            Ok(inv) => {
                outcome.attempts += inv.attempts;
                match inv.output {
                    ModelOutput::ToolCall(call) => call,
                    ModelOutput::Structured(_) => unreachable!("tool_loop output is validated as a tool call"),
                }
            }
            Err(e) => {
                if let InvokeError::Exhausted { attempts, .. } = &e {
                    outcome.attempts += attempts;
                }
                failure = Some(format!("verification failed: {e}"));
                break;
            }
        };
        transcript.push(Turn::Assistant { call: call.clone() });
        let (parts, is_error) = match call.name.as_str() {
            GET_PAGE => match call.arguments.get("page").and_then(Value::as_u64) {
                Some(p) => match get_page(doc, p as u32) {
                    Ok(view) => {
                        fetched.insert(view.page);
                        let mut parts = vec![ContentPart::text(
                            json!({"page": view.page, "text": view.text, "image": view.image}).to_string(),
                        )];
                        if let Some(image) = view.image {
                            parts.push(ContentPart::Image { reference: image });
                        }
                        (parts, false)
                    }
                    Err(e) => (vec![ContentPart::text(json!({"error": e.to_string()}).to_string())], true),
                },
                None => (vec![ContentPart::text(json!({"error": "`page` must be an integer"}).to_string())], true),
            },
            SUBMIT_VERIFICATION => {
                let unread: Vec<&str> = open
                    .iter()
                    .filter(|c| c.disputed_pages.is_disjoint(&fetched))
                    .map(|c| c.column.id.as_str())
                    .collect();
                if !unread.is_empty() {
                    outcome.forced_tool_rejections += 1;
                    let message = format!(
                        "submission rejected: call get_page on a disputed page first (unverified: {})",
                        unread.join(", ")
                    );
                    (vec![ContentPart::text(json!({ "error": message }).to_string())], true)
                } else {
                    match validate_submission(&call.arguments, &open, doc) {
                        Ok(entries) => {
                            submitted = Some(entries);
                            (vec![ContentPart::text(json!({"status": "accepted"}).to_string())], false)
                        }
                        Err(e) => (
                            vec![ContentPart::text(json!({ "error": format!("submission rejected: {e}") }).to_string())],
                            true,
                        ),
                    }
                }
            }
            other => (vec![ContentPart::text(json!({"error": format!("unknown tool `{other}`")}).to_string())], true),
        };
        transcript.push(Turn::Tool {
            call_id: call.id.clone(),
            name: call.name.clone(),
            parts,
            is_error,
        });
        if submitted.is_some() {
            break;
        }
    }

    let mut entries = submitted.unwrap_or_default();
    let failure = failure.unwrap_or_else(|| format!("verification failed: no accepted submission within {max_turns} turns"));
    let mut open_iter = open.iter();
    for (slot, conflict) in decided.iter_mut().zip(conflicts) {
        if slot.is_some() {
            continue;
        }
        let c = open_iter.next().expect("open conflicts in order");
        debug_assert_eq!(c.column.id, conflict.column.id);
        *slot = Some(match entries.remove(&c.column.id) {
            Some(entry) => decide(c, entry, doc),
            None => c.both_wrong(failure.clone()),
        });
    }
    outcome.cells = decided.into_iter().flatten().collect();
    outcome
}

/// Verifies a single escalated pair.
pub fn pass2_verify(
    column: &ColumnDef,
    a: &Extraction,
    b: &Extraction,
    doc: &ParsedDocument,
    ctx: &AgentContext<'_>,
    batch_id: usize,
    max_turns: u32,
) -> (ReconciledCell, VerifyOutcome) {
    let conflict = Conflict::new(column.clone(), a.clone(), b.clone());
    let mut outcome = verify_conflicts(batch_id, std::slice::from_ref(&conflict), doc, ctx, max_turns);
    let cell = outcome.cells.pop().expect("one cell per conflict");
    (cell, outcome)
}
