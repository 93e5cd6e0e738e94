use serde_json::{json, Value};

use super::{GoldCell, Prediction, Tolerance, Verdict};
use crate::agents::AgentContext;
use crate::backend::{AgentRole, ModelOutput, ModelRequest, RequestMode, RequestTag, Turn};
use crate::prompts::with_payload;
use crate::schema::{Category, ColumnDef};
use crate::text::{is_not_reported, word_set};

use super::numeric::numeric_match_detail;

/// Model-backed grader for values that rules cannot score.
pub struct JudgeContext<'a> {
    pub agent: AgentContext<'a>,
}

fn judge_schema() -> Value {
    json!({
        "type": "object",
        "required": ["verdict", "rationale"],
        "additionalProperties": false,
        "properties": {
            "verdict": {"enum": ["correct", "incorrect"]},
            "rationale": {"type": "string"}
        }
    })
}

/// Word-set containment in either direction, case-insensitive.
pub fn fallback_text_match(predicted: &str, gold: &str) -> bool {
    let (p, g) = (word_set(predicted), word_set(gold));
    !p.is_empty() && !g.is_empty() && (p.is_subset(&g) || g.is_subset(&p))
}

fn ask_judge(
    judge: &JudgeContext<'_>,
    column: &ColumnDef,
    predicted: &str,
    gold: &str,
    doc_id: &str,
    turn: u32,
) -> (Verdict, Option<String>) {
    let prompts = judge.agent.prompts;
    let system = match column.category {
        Category::Numerical => &prompts.judge_numerical,
        Category::FreeText => &prompts.judge_free_text,
    };
    let payload = json!({
        "category": column.category,
        "column_name": column.name,
        "definition": column.definition,
        "prediction": predicted,
        "gold": gold,
    });
    let request = ModelRequest {
        tag: RequestTag {
            doc_id: doc_id.to_string(),
            agent: AgentRole::Judge,
            batch_id: None,
            turn,
        },
        mode: RequestMode::Judge,
        system_prompt: system.clone(),
        turns: vec![Turn::user_text(with_payload("Grade this prediction.", &payload))],
        tools: vec![],
        output_schema: Some(judge_schema()),
        temperature: 0.0,
    };
    match judge.agent.invoker().invoke(&request) {
        Ok(inv) => match inv.output {
            ModelOutput::Structured(v) => {
                let rationale = v.get("rationale").and_then(Value::as_str).map(str::to_string);
                let verdict = match v.get("verdict").and_then(Value::as_str) {
                    Some("correct") => Verdict::Correct,
                    _ => Verdict::Incorrect,
                };
                (verdict, rationale)
            }
            ModelOutput::ToolCall(_) => (Verdict::Unevaluated, Some("judge replied with a tool call".into())),
        },
        Err(e) => (Verdict::Unevaluated, Some(format!("judge failed: {e}"))),
    }
}

/// Scores one cell. `turn` distinguishes judge calls in the usage ledger.
pub fn judge_cell(
    prediction: &Prediction,
    gold: &GoldCell,
    column: &ColumnDef,
    judge: Option<&JudgeContext<'_>>,
    tol: Tolerance,
    doc_id: &str,
    turn: u32,
) -> (Verdict, Option<String>) {
    let gold_nr = is_not_reported(&gold.value);
    if !prediction.attempted() {
        return match (gold_nr, prediction.failed) {
            (true, false) => (Verdict::Correct, None),
            (_, true) => (Verdict::Missing, Some("extraction failed".into())),
            (false, false) => (Verdict::Missing, None),
        };
    }
    if gold_nr {
        return (Verdict::Incorrect, Some("gold reports no value".into()));
    }
    if column.category == Category::Numerical {
        let detail = numeric_match_detail(&prediction.value, &gold.value, tol);
        if !detail.unparseable_gold {
            let note = (!detail.matched).then(|| format!("unmatched gold numbers {:?}", detail.unmatched_gold));
            let verdict = if detail.matched { Verdict::Correct } else { Verdict::Incorrect };
            return (verdict, note);
        }
    }
    match judge {
        Some(j) => ask_judge(j, column, &prediction.value, &gold.value, doc_id, turn),
        None => {
            let ok = fallback_text_match(&prediction.value, &gold.value);
            (if ok { Verdict::Correct } else { Verdict::Incorrect }, Some("word-set fallback".into()))
        }
    }
}
