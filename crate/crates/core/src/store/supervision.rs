//! Preference and supervision signals derived from reviewed runs.
//!
//! * A human correction yields a supervision record: the corrected value is
//!   the target, each distinct differing agent value a negative.
//! * A human accept of one agent yields a preference for that agent.
//! * Otherwise the reconciler label decides; `both_correct` and
//!   `both_wrong` carry no preference.

use serde::{Deserialize, Serialize};

use super::{CellRecord, ReviewStatus, StoredTable};
use crate::agents::{Attribution, Extraction, Extractor};
use crate::reconciler::VerificationLabel;
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub agent: Extractor,
    pub value: String,
    pub attribution: Option<Attribution>,
}

impl From<&Extraction> for Candidate {
    fn from(e: &Extraction) -> Self {
        Self {
            agent: e.agent,
            value: e.value.clone(),
            attribution: e.attribution.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    Reconciler,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupervisionRecord {
    Preference {
        doc_id: String,
        run: u32,
        column_id: String,
        source: SignalSource,
        label: VerificationLabel,
        chosen: Candidate,
        rejected: Candidate,
    },
    Supervision {
        doc_id: String,
        run: u32,
        column_id: String,
        target: String,
        negatives: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
}

fn record_signal(record: &CellRecord, run: u32) -> Option<SupervisionRecord> {
    let cell = &record.reconciled;
    let (a, b) = (&cell.inputs.a, &cell.inputs.b);
    let preference = |source, chosen: &Extraction, rejected: &Extraction| {
        let tie = source == SignalSource::Human
            && !rejected.failed
            && normalize_whitespace(&chosen.value) == normalize_whitespace(&rejected.value);
        (!tie).then(|| SupervisionRecord::Preference {
            doc_id: record.doc_id.clone(),
            run,
            column_id: record.column_id.clone(),
            source,
            label: cell.label,
            chosen: chosen.into(),
            rejected: rejected.into(),
        })
    };
    match record.review_status {
        ReviewStatus::HumanCorrected => {
            let target = record.human_value.clone()?;
            let mut negatives: Vec<String> = Vec::new();
            for e in [a, b] {
                let v = normalize_whitespace(&e.value);
                if !e.failed && v != normalize_whitespace(&target) && !negatives.contains(&v) {
                    negatives.push(v);
                }
            }
            Some(SupervisionRecord::Supervision {
                doc_id: record.doc_id.clone(),
                run,
                column_id: record.column_id.clone(),
                target,
                negatives,
                note: record.reviewer_note.clone(),
            })
        }
        ReviewStatus::AcceptedA => preference(SignalSource::Human, a, b),
        ReviewStatus::AcceptedB => preference(SignalSource::Human, b, a),
        ReviewStatus::Unreviewed | ReviewStatus::AcceptedReconciled => match cell.label {
            VerificationLabel::ACorrectBWrong => preference(SignalSource::Reconciler, a, b),
            VerificationLabel::BCorrectAWrong => preference(SignalSource::Reconciler, b, a),
            VerificationLabel::BothCorrect | VerificationLabel::BothWrong => None,
        },
    }
}

/// Signals for one stored run, in cell order.
pub fn export_supervision_records(table: &StoredTable) -> Vec<SupervisionRecord> {
    table
        .records
        .iter()
        .filter_map(|r| record_signal(r, table.manifest.run_version))
        .collect()
}
