//! Two-pass adjudication of Agent A against Agent B.
//!
//! Pass 1 accepts agreement by rule without any model call. Every other
//! column of a batch goes into a single verification loop that must read
//! a disputed page before it may submit labels.

mod verify;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentContext, Attribution, Extraction, Extractor};
use crate::docmodel::ParsedDocument;
use crate::schema::ColumnBatch;
use crate::text::{is_not_reported, is_strict_token_superset, normalize_whitespace, NOT_REPORTED};

pub use verify::{pass2_verify, reconciler_tools, verify_conflicts, Conflict, VerifyOutcome, GET_PAGE, SUBMIT_VERIFICATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerificationLabel {
    #[serde(rename = "both_correct")]
    BothCorrect,
    #[serde(rename = "a_correct_b_wrong", alias = "A_correct_B_wrong")]
    ACorrectBWrong,
    #[serde(rename = "b_correct_a_wrong", alias = "B_correct_A_wrong")]
    BCorrectAWrong,
    #[serde(rename = "both_wrong")]
    BothWrong,
}

impl VerificationLabel {
    pub const ALL: [VerificationLabel; 4] = [
        VerificationLabel::BothCorrect,
        VerificationLabel::ACorrectBWrong,
        VerificationLabel::BCorrectAWrong,
        VerificationLabel::BothWrong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerificationLabel::BothCorrect => "both_correct",
            VerificationLabel::ACorrectBWrong => "a_correct_b_wrong",
            VerificationLabel::BCorrectAWrong => "b_correct_a_wrong",
            VerificationLabel::BothWrong => "both_wrong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    Pass1,
    Pass2,
}

/// Which Pass-1 condition accepted a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementRule {
    DualSentinel,
    Identical,
    Superset,
}

/// A value the verifier read from the page when both candidates were wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub value: String,
    pub attribution: Option<Attribution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellInputs {
    pub a: Extraction,
    pub b: Extraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciledCell {
    pub column_id: String,
    pub final_value: String,
    pub label: VerificationLabel,
    pub attribution: Option<Attribution>,
    pub reconciler_reasoning: String,
    pub pass: Pass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<AgreementRule>,
    pub low_confidence: bool,
    /// Kept apart from `final_value`; only set under `both_wrong`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Correction>,
    #[serde(default)]
    pub verified_without_image: bool,
    pub inputs: CellInputs,
}

impl ReconciledCell {
    pub fn check_invariants(&self) -> Result<(), String> {
        let id = &self.column_id;
        if self.low_confidence != (self.label == VerificationLabel::BothWrong) {
            return Err(format!("{id}: low_confidence must be set exactly for both_wrong"));
        }
        if self.pass == Pass::Pass1 && self.label != VerificationLabel::BothCorrect {
            return Err(format!("{id}: pass1 cells must be both_correct"));
        }
        if self.pass == Pass::Pass1 && self.rule.is_none() {
            return Err(format!("{id}: pass1 cells must name their agreement rule"));
        }
        if self.final_value.trim().is_empty() {
            return Err(format!("{id}: final value is empty"));
        }
        if !is_not_reported(&self.final_value) && self.attribution.is_none() && self.label != VerificationLabel::BothWrong {
            return Err(format!("{id}: reported final value has no attribution"));
        }
        if self.correction.is_some() && self.label != VerificationLabel::BothWrong {
            return Err(format!("{id}: only both_wrong cells may carry a correction"));
        }
        if self.inputs.a.column_id != *id || self.inputs.b.column_id != *id {
            return Err(format!("{id}: inputs belong to another column"));
        }
        Ok(())
    }

    pub fn extraction(&self, agent: Extractor) -> &Extraction {
        match agent {
            Extractor::AgentA => &self.inputs.a,
            Extractor::AgentB => &self.inputs.b,
        }
    }
}

fn ordered<'e>(x: &'e Extraction, y: &'e Extraction) -> (&'e Extraction, &'e Extraction) {
    if y.agent < x.agent {
        (y, x)
    } else {
        (x, y)
    }
}

fn inputs_of(a: &Extraction, b: &Extraction) -> CellInputs {
    let (a, b) = ordered(a, b);
    CellInputs { a: a.clone(), b: b.clone() }
}

/// Pass-1 agreement. Returns a `both_correct` cell when the two extractions
/// agree by one of three rules, checked in order:
///
/// 1. both are the sentinel,
/// 2. the values are equal after whitespace normalization,
/// 3. both cite the same page and modality and one value's tokens strictly
///    contain the other's; the larger value wins.
///
/// Failed extractions never agree.
pub fn pass1_agree(a: &Extraction, b: &Extraction) -> Option<ReconciledCell> {
    if a.failed || b.failed || a.column_id != b.column_id {
        return None;
    }
    let (first, second) = ordered(a, b);
    let cell = |final_value: String, attribution: Option<Attribution>, rule, reasoning: &str| ReconciledCell {
        column_id: a.column_id.clone(),
        final_value,
        label: VerificationLabel::BothCorrect,
        attribution,
        reconciler_reasoning: reasoning.to_string(),
        pass: Pass::Pass1,
        rule: Some(rule),
        low_confidence: false,
        correction: None,
        verified_without_image: false,
        inputs: inputs_of(a, b),
    };
    if is_not_reported(&a.value) && is_not_reported(&b.value) {
        return Some(cell(
            NOT_REPORTED.to_string(),
            None,
            AgreementRule::DualSentinel,
            "Both agents report the value as not reported.",
        ));
    }
    let (na, nb) = (normalize_whitespace(&a.value), normalize_whitespace(&b.value));
    if na == nb {
        let attribution = first.attribution.clone().or_else(|| second.attribution.clone());
        return Some(cell(na, attribution, AgreementRule::Identical, "Both agents report the same value."));
    }
    let (Some(att_a), Some(att_b)) = (&a.attribution, &b.attribution) else {
        return None;
    };
    if !att_a.same_location(att_b) {
        return None;
    }
    let winner = if is_strict_token_superset(&a.value, &b.value) {
        a
    } else if is_strict_token_superset(&b.value, &a.value) {
        b
    } else {
        return None;
    };
    Some(cell(
        normalize_whitespace(&winner.value),
        winner.attribution.clone(),
        AgreementRule::Superset,
        "Both agents cite the same evidence; the more complete value is kept.",
    ))
}

/// Cells for one batch plus the Pass-2 call counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileOutcome {
    pub cells: Vec<ReconciledCell>,
    pub escalated: usize,
    /// 1 when the batch needed a verification loop, otherwise 0.
    pub pass2_invocations: u32,
    pub turns: u32,
    pub attempts: u32,
    /// Submissions refused because no disputed page had been read.
    pub forced_tool_rejections: u32,
}

impl ReconcileOutcome {
    pub fn retries(&self) -> u32 {
        self.attempts - self.turns
    }
}

/// Resolves every column of `batch` exactly once, in batch order.
pub fn reconcile_batch(
    batch: &ColumnBatch,
    extractions_a: &[Extraction],
    extractions_b: &[Extraction],
    doc: &ParsedDocument,
    ctx: &AgentContext<'_>,
    max_turns: u32,
) -> ReconcileOutcome {
    let find = |list: &[Extraction], id: &str, agent: Extractor| {
        list.iter()
            .find(|e| e.column_id == id)
            .cloned()
            .unwrap_or_else(|| Extraction::failure(id, agent, "no extraction was produced"))
    };
    let mut slots: Vec<Option<ReconciledCell>> = Vec::with_capacity(batch.columns.len());
    let mut conflicts = Vec::new();
    for column in &batch.columns {
        let a = find(extractions_a, &column.id, Extractor::AgentA);
        let b = find(extractions_b, &column.id, Extractor::AgentB);
        match pass1_agree(&a, &b) {
            Some(cell) => slots.push(Some(cell)),
            None => {
                slots.push(None);
                conflicts.push(Conflict::new(column.clone(), a, b));
            }
        }
    }
    let escalated = conflicts.len();
    let verified = verify_conflicts(batch.batch_id, &conflicts, doc, ctx, max_turns);
    let mut resolved = verified.cells.into_iter();
    let cells = slots
        .into_iter()
        .map(|slot| slot.unwrap_or_else(|| resolved.next().expect("one verified cell per conflict")))
        .collect();
    ReconcileOutcome {
        cells,
        escalated,
        pass2_invocations: verified.invoked as u32,
        turns: verified.turns,
        attempts: verified.attempts,
        forced_tool_rejections: verified.forced_tool_rejections,
    }
}
