use std::collections::BTreeSet;
use std::sync::Arc;

use evtab_core::agents::Extractor;
use evtab_core::clock::FixedClock;
use evtab_core::reconciler::VerificationLabel;
use evtab_core::store::{replay, ReviewAction, ReviewStatus, SignalSource, Store, SupervisionRecord};

use super::fixtures::{document, ensure, run_mock, schema};

pub fn check() -> Result<String, String> {
    let doc = document();
    let run = run_mock(&doc, &schema());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::with_clock(dir.path(), Arc::new(FixedClock::default())).map_err(|e| e.to_string())?;
    let version = store
        .persist_run(&doc, &run.cells, run.manifest.clone(), &run.ledger)
        .map_err(|e| e.to_string())?;

    // persist -> load identity
    let table = store.load(&doc.doc_id, Some(version)).map_err(|e| e.to_string())?;
    let loaded: Vec<_> = table.records.iter().map(|r| r.reconciled.clone()).collect();
    ensure(loaded == run.cells, || "loaded cells differ from persisted cells".into())?;
    let mut manifest = run.manifest.clone();
    manifest.run_version = version;
    ensure(table.manifest == manifest, || "loaded manifest differs".into())?;
    ensure(store.load_ledger(&doc.doc_id, Some(version)).map_err(|e| e.to_string())? == run.ledger, || "ledger differs".into())?;
    ensure(store.load_document(&doc.doc_id).map_err(|e| e.to_string())? == doc, || "document differs".into())?;
    ensure(table.records.iter().all(|r| r.review_status == ReviewStatus::Unreviewed && r.history.is_empty()), || {
        "fresh records carry review state".into()
    })?;

    // supervision on the unreviewed run
    let records = store.export_supervision(std::slice::from_ref(&doc.doc_id)).map_err(|e| e.to_string())?;
    let by_label = |label| -> BTreeSet<String> {
        run.cells.iter().filter(|c| c.label == label).map(|c| c.column_id.clone()).collect()
    };
    let a_over_b: BTreeSet<String> = records
        .iter()
        .filter_map(|r| match r {
            SupervisionRecord::Preference { column_id, source: SignalSource::Reconciler, chosen, rejected, .. }
                if chosen.agent == Extractor::AgentA && rejected.agent == Extractor::AgentB =>
            {
                Some(column_id.clone())
            }
            _ => None,
        })
        .collect();
    let expected = by_label(VerificationLabel::ACorrectBWrong);
    ensure(!expected.is_empty() && a_over_b == expected, || format!("A>B for {a_over_b:?}, expected {expected:?}"))?;
    let signalled: BTreeSet<String> = records
        .iter()
        .map(|r| match r {
            SupervisionRecord::Preference { column_id, .. } | SupervisionRecord::Supervision { column_id, .. } => column_id.clone(),
        })
        .collect();
    let both_correct = by_label(VerificationLabel::BothCorrect);
    ensure(signalled.is_disjoint(&both_correct), || "both_correct cells produced signals".into())?;

    // reviews, then replay from the history log
    let ids: Vec<String> = run.cells.iter().map(|c| c.column_id.clone()).collect();
    let actions = [
        (&ids[0], ReviewAction::AcceptA { note: None }),
        (&ids[1], ReviewAction::Correct { value: "Phase 2".into(), note: Some("checked table 1".into()) }),
        (&ids[1], ReviewAction::AcceptReconciled { note: None }),
        (&ids[2], ReviewAction::AcceptB { note: None }),
        (&ids[2], ReviewAction::Correct { value: "  40 months ".into(), note: None }),
    ];
    for (id, action) in &actions {
        store.apply_review(&doc.doc_id, id, action.clone()).map_err(|e| e.to_string())?;
    }
    let history = store.history(&doc.doc_id).map_err(|e| e.to_string())?;
    ensure(history.len() == actions.len(), || format!("{} history events", history.len()))?;
    ensure(history.iter().enumerate().all(|(i, e)| e.seq == i as u64 + 1), || "history sequence".into())?;
    let reviewed = store.load(&doc.doc_id, None).map_err(|e| e.to_string())?;
    for (record, cell) in reviewed.records.iter().zip(&run.cells) {
        let rebuilt = replay(&doc.doc_id, cell, &history);
        ensure(rebuilt == *record, || format!("{}: replay differs from stored record", cell.column_id))?;
        record.check_invariants()?;
    }
    let reopened = Store::with_clock(dir.path(), Arc::new(FixedClock::default())).map_err(|e| e.to_string())?;
    ensure(reopened.load(&doc.doc_id, None).map_err(|e| e.to_string())? == reviewed, || "reopened store differs".into())?;
    let third = &reviewed.records[2];
    ensure(third.effective_value() == "40 months" && third.history.len() == 2, || "correction not applied".into())?;
    ensure(reviewed.records[1].review_status == ReviewStatus::AcceptedReconciled, || "later action must win".into())?;

    Ok(format!(
        "{} records round-tripped; {} events replayed; {} A>B signals for {} a_correct_b_wrong cells, none for {} both_correct",
        run.cells.len(),
        history.len(),
        a_over_b.len(),
        expected.len(),
        both_correct.len()
    ))
}
