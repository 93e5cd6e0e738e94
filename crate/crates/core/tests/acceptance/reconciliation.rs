use evtab_core::agents::{AgentContext, Attribution, Extraction, Extractor};
use evtab_core::backend::{CallOutcome, RawOutput, RawReply, ScriptedBackend, TransportError, UsageLedger, UsageRecord};
use evtab_core::clock::FixedClock;
use evtab_core::docmodel::{Modality, ParsedDocument};
use evtab_core::prompts::PromptSet;
use evtab_core::reconciler::{reconcile_batch, AgreementRule, Pass, ReconcileOutcome, VerificationLabel, GET_PAGE, SUBMIT_VERIFICATION};
use evtab_core::schema::{Category, ColumnBatch, ColumnDef};
use serde_json::{json, Value};

use super::fixtures::{document, ensure};

const MAX_TURNS: u32 = 8;

type Reply = Result<RawReply, TransportError>;

fn call(name: &str, arguments: Value) -> Reply {
    Ok(RawReply {
        output: RawOutput::ToolCall {
            id: None,
            name: name.into(),
            arguments,
        },
        usage: None,
    })
}

fn get_page(page: u32) -> Reply {
    call(GET_PAGE, json!({ "page": page }))
}

fn submit(entries: Value) -> Reply {
    call(SUBMIT_VERIFICATION, json!({ "entries": entries }))
}

fn ex(agent: Extractor, id: &str, value: &str, at: Option<(u32, Modality)>) -> Extraction {
    Extraction {
        column_id: id.into(),
        value: value.into(),
        reasoning: String::new(),
        attribution: at.map(|(page, modality)| Attribution {
            page,
            modality,
            verbatim_quote: None,
        }),
        agent,
        failed: false,
    }
}

fn a(id: &str, value: &str, at: Option<(u32, Modality)>) -> Extraction {
    ex(Extractor::AgentA, id, value, at)
}

fn b(id: &str, value: &str, at: Option<(u32, Modality)>) -> Extraction {
    ex(Extractor::AgentB, id, value, at)
}

fn batch_of(ids: &[&str]) -> ColumnBatch {
    ColumnBatch {
        batch_id: 0,
        columns: ids
            .iter()
            .map(|id| ColumnDef {
                id: id.to_string(),
                name: id.to_string(),
                definition: "value; Not reported if absent".into(),
                category: Category::FreeText,
                group: "g".into(),
            })
            .collect(),
        source_groups: vec!["g".into()],
    }
}

struct Run {
    outcome: ReconcileOutcome,
    records: Vec<UsageRecord>,
    requests: usize,
    unused: usize,
}

fn reconcile(doc: &ParsedDocument, xa: Vec<Extraction>, xb: Vec<Extraction>, script: Vec<Reply>) -> Run {
    let ids: Vec<String> = xa.iter().map(|e| e.column_id.clone()).collect();
    let batch = batch_of(&ids.iter().map(String::as_str).collect::<Vec<_>>());
    let backend = ScriptedBackend::new(script);
    let ledger = UsageLedger::new();
    let prompts = PromptSet::default();
    let clock = FixedClock::default();
    let ctx = AgentContext {
        backend: &backend,
        ledger: &ledger,
        clock: &clock,
        prompts: &prompts,
        retry_limit: 0,
    };
    let outcome = reconcile_batch(&batch, &xa, &xb, doc, &ctx, MAX_TURNS);
    Run {
        outcome,
        records: ledger.records(),
        requests: backend.requests().len(),
        unused: backend.remaining(),
    }
}

fn is_get_page(r: &UsageRecord) -> bool {
    matches!(&r.outcome, CallOutcome::ToolCall { name } if name == GET_PAGE)
}

fn pass1_table(doc: &ParsedDocument) -> Result<usize, String> {
    let t4 = Some((4, Modality::Table));
    let rows: Vec<(&str, Extraction, Extraction, AgreementRule, &str)> = vec![
        ("dual sentinel", a("c", "Not reported", None), b("c", "not reported", None), AgreementRule::DualSentinel, "Not reported"),
        ("identical", a("c", "Phase 3", Some((1, Modality::Text))), b("c", "Phase 3", Some((1, Modality::Text))), AgreementRule::Identical, "Phase 3"),
        ("identical modulo whitespace", a("c", " 1:1 ", Some((1, Modality::Text))), b("c", "1:1", Some((2, Modality::Text))), AgreementRule::Identical, "1:1"),
        ("superset, B larger", a("c", "0.62", t4), b("c", "0.62 (95% CI 0.51–0.76)", t4), AgreementRule::Superset, "0.62 (95% CI 0.51–0.76)"),
        ("superset, A larger", a("c", "36.5 months", t4), b("c", "36.5", t4), AgreementRule::Superset, "36.5 months"),
    ];
    for (name, xa, xb, rule, expected) in &rows {
        let run = reconcile(doc, vec![xa.clone()], vec![xb.clone()], vec![]);
        let cell = &run.outcome.cells[0];
        ensure(run.requests == 0 && run.records.is_empty(), || format!("pass-1 {name}: made backend calls"))?;
        ensure(cell.pass == Pass::Pass1 && cell.label == VerificationLabel::BothCorrect, || format!("pass-1 {name}: {cell:?}"))?;
        ensure(cell.rule == Some(*rule), || format!("pass-1 {name}: rule {:?}", cell.rule))?;
        ensure(cell.final_value == *expected, || format!("pass-1 {name}: final {}", cell.final_value))?;
        cell.check_invariants()?;
    }
    Ok(rows.len())
}

struct Escalation {
    name: &'static str,
    a: Extraction,
    b: Extraction,
    script: Vec<Reply>,
    label: VerificationLabel,
    final_value: &'static str,
    final_page: Option<u32>,
    correction: Option<&'static str>,
}

fn escalations() -> Vec<Escalation> {
    let text = |p| Some((p, Modality::Text));
    let table = |p| Some((p, Modality::Table));
    let label = |l: &str| json!([{"column_id": "c", "label": l, "reasoning": "checked the page"}]);
    let mut failed_a = Extraction::failure("c", Extractor::AgentA, "extraction failed: timeout");
    failed_a.reasoning = "extraction failed: timeout".into();
    vec![
        Escalation {
            name: "conflicting values on one page",
            a: a("c", "0.62", table(4)),
            b: b("c", "0.71", table(4)),
            script: vec![get_page(4), submit(label("a_correct_b_wrong"))],
            label: VerificationLabel::ACorrectBWrong,
            final_value: "0.62",
            final_page: Some(4),
            correction: None,
        },
        Escalation {
            name: "conflicting values on different pages",
            a: a("c", "34.2 months", text(2)),
            b: b("c", "36.5 months", table(4)),
            script: vec![get_page(2), get_page(4), submit(label("b_correct_a_wrong"))],
            label: VerificationLabel::BCorrectAWrong,
            final_value: "36.5 months",
            final_page: Some(4),
            correction: None,
        },
        Escalation {
            name: "value against sentinel",
            a: a("c", "Placebo plus ADT", text(4)),
            b: b("c", "Not reported", None),
            script: vec![get_page(4), submit(label("b_correct_a_wrong"))],
            label: VerificationLabel::BCorrectAWrong,
            final_value: "Not reported",
            final_page: None,
            correction: None,
        },
        Escalation {
            name: "superset at a different location",
            a: a("c", "0.62", table(4)),
            b: b("c", "0.62 (95% CI 0.51–0.76)", table(5)),
            script: vec![get_page(5), submit(label("both_correct"))],
            label: VerificationLabel::BothCorrect,
            final_value: "0.62 (95% CI 0.51–0.76)",
            final_page: Some(5),
            correction: None,
        },
        Escalation {
            name: "both wrong with a correction",
            a: a("c", "10 months", text(1)),
            b: b("c", "12 months", text(3)),
            script: vec![
                get_page(1),
                submit(json!([{
                    "column_id": "c",
                    "label": "both_wrong",
                    "reasoning": "the table on page 1 says 11 months",
                    "corrected_value": "11 months",
                    "attribution": {"page": 1, "modality": "table", "verbatim_quote": "11 months"}
                }])),
            ],
            label: VerificationLabel::BothWrong,
            final_value: "Not reported",
            final_page: None,
            correction: Some("11 months"),
        },
        Escalation {
            name: "agent A failed",
            a: failed_a,
            b: b("c", "1,150", text(2)),
            script: vec![get_page(2), submit(label("b_correct_a_wrong"))],
            label: VerificationLabel::BCorrectAWrong,
            final_value: "1,150",
            final_page: Some(2),
            correction: None,
        },
    ]
}

fn escalation_cases(doc: &ParsedDocument) -> Result<usize, String> {
    let cases = escalations();
    for case in &cases {
        let name = case.name;
        let run = reconcile(doc, vec![case.a.clone()], vec![case.b.clone()], case.script.clone());
        let cell = &run.outcome.cells[0];
        ensure(run.unused == 0, || format!("{name}: {} scripted replies unused", run.unused))?;
        ensure(run.outcome.pass2_invocations == 1, || format!("{name}: {} invocations", run.outcome.pass2_invocations))?;
        ensure(run.records.iter().any(is_get_page), || format!("{name}: no get_page usage record"))?;
        ensure(cell.pass == Pass::Pass2 && cell.label == case.label, || format!("{name}: got {:?}/{:?}", cell.pass, cell.label))?;
        ensure(cell.final_value == case.final_value, || format!("{name}: final {}", cell.final_value))?;
        ensure(cell.attribution.as_ref().map(|a| a.page) == case.final_page, || format!("{name}: attribution {:?}", cell.attribution))?;
        ensure(cell.low_confidence == (case.label == VerificationLabel::BothWrong), || format!("{name}: low_confidence"))?;
        ensure(
            cell.correction.as_ref().map(|c| c.value.as_str()) == case.correction,
            || format!("{name}: correction {:?}", cell.correction),
        )?;
        cell.check_invariants()?;
    }
    Ok(cases.len())
}

fn rejection_case(doc: &ParsedDocument) -> Result<(), String> {
    let verdict = json!([{"column_id": "c", "label": "a_correct_b_wrong", "reasoning": "page 4 table"}]);
    let run = reconcile(
        doc,
        vec![a("c", "0.62", Some((4, Modality::Table)))],
        vec![b("c", "0.71", Some((4, Modality::Table)))],
        vec![submit(verdict.clone()), get_page(4), submit(verdict)],
    );
    let o = &run.outcome;
    ensure(o.forced_tool_rejections == 1, || format!("{} rejections recorded", o.forced_tool_rejections))?;
    ensure(o.turns == 3 && run.unused == 0, || format!("{} turns", o.turns))?;
    let names: Vec<String> = run
        .records
        .iter()
        .map(|r| r.tool_name().unwrap_or("-").to_string())
        .collect();
    ensure(names == [SUBMIT_VERIFICATION, GET_PAGE, SUBMIT_VERIFICATION], || format!("ledger trail {names:?}"))?;
    ensure(o.cells[0].label == VerificationLabel::ACorrectBWrong, || format!("label {:?}", o.cells[0].label))?;
    Ok(())
}

// Ten columns, three conflicts: one verification loop covers all three.
fn grouped_batch(doc: &ParsedDocument) -> Result<(), String> {
    let t = Some((1, Modality::Text));
    let ids: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
    let xa: Vec<Extraction> = ids.iter().map(|id| a(id, "Phase 3", t)).collect();
    let mut xb: Vec<Extraction> = ids.iter().map(|id| b(id, "Phase 3", t)).collect();
    for i in [2, 5, 7] {
        xb[i].value = "Phase 2".into();
    }
    let entries: Vec<Value> = [2, 5, 7]
        .iter()
        .map(|i| json!({"column_id": format!("c{i}"), "label": "a_correct_b_wrong", "reasoning": "page 1"}))
        .collect();
    let run = reconcile(doc, xa, xb, vec![get_page(1), submit(Value::Array(entries))]);
    let o = &run.outcome;
    ensure(o.pass2_invocations == 1 && o.escalated == 3, || format!("{} invocations, {} escalated", o.pass2_invocations, o.escalated))?;
    ensure(run.requests == 2, || format!("{} backend calls", run.requests))?;
    ensure(o.cells.len() == 10 && o.cells.iter().filter(|c| c.pass == Pass::Pass1).count() == 7, || "cell split".into())?;
    Ok(())
}

pub fn check() -> Result<String, String> {
    let doc = document();
    let pass1 = pass1_table(&doc)?;
    let escalated = escalation_cases(&doc)?;
    rejection_case(&doc)?;
    grouped_batch(&doc)?;
    Ok(format!("{pass1} pass-1 rows with 0 calls, {escalated} escalations with get_page, 1 forced rejection"))
}
