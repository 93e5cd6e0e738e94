use std::collections::{BTreeMap, BTreeSet};

use evtab_core::agents::{AgentBSession, AgentContext, SessionCache, ToolContext, GET_CHUNKS_BY_PAGE, SEARCH_CHUNKS, SUBMIT_EXTRACTION};
use evtab_core::backend::{ContentPart, RawOutput, RawReply, ScriptedBackend, TransportError, Turn, UsageLedger};
use evtab_core::clock::FixedClock;
use evtab_core::docmodel::get_page;
use evtab_core::prompts::PromptSet;
use evtab_core::retrieval::{build_index, HashEmbedder};
use evtab_core::schema::{Category, ColumnBatch, ColumnDef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::fixtures::{document, ensure};

const SESSIONS: usize = 60;

fn call(name: &str, arguments: Value) -> Result<RawReply, TransportError> {
    Ok(RawReply {
        output: RawOutput::ToolCall {
            id: None,
            name: name.into(),
            arguments,
        },
        usage: None,
    })
}

fn batch(id: usize) -> ColumnBatch {
    ColumnBatch {
        batch_id: id,
        columns: vec![ColumnDef {
            id: format!("col{id}"),
            name: format!("Column {id}"),
            definition: "value; Not reported if absent".into(),
            category: Category::FreeText,
            group: format!("g{id}"),
        }],
        source_groups: vec![format!("g{id}")],
    }
}

/// Page contents delivered in full by tool results, in transcript order.
pub fn delivered(transcript: &[Turn]) -> Vec<(u32, String)> {
    let mut out = Vec::new();
    for turn in transcript {
        let Turn::Tool { parts, .. } = turn else { continue };
        for part in parts {
            let ContentPart::Text { text } = part else { continue };
            let v: Value = serde_json::from_str(text).expect("tool payloads are JSON");
            for item in v["pages"].as_array().into_iter().chain(v["hits"].as_array()).flatten() {
                let content = item["content"].as_str().unwrap_or_default();
                if !content.starts_with("[[cached:") {
                    out.push((item["page"].as_u64().unwrap() as u32, content.to_string()));
                }
            }
        }
    }
    out
}

pub fn check() -> Result<String, String> {
    let doc = document();
    let embedder = HashEmbedder::new(32);
    let index = build_index(&doc, &embedder).map_err(|e| e.to_string())?;
    let page_chars: BTreeMap<u32, usize> = (1..=doc.n_pages)
        .map(|p| (p, get_page(&doc, p).unwrap().text.chars().count()))
        .collect();
    let prompts = PromptSet::default();
    let clock = FixedClock::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let (mut requests, mut pointers) = (0usize, 0usize);

    for s in 0..SESSIONS {
        let n_batches = rng.random_range(1..=4);
        let mut script = Vec::new();
        let mut requested: BTreeSet<u32> = BTreeSet::new();
        let mut searched = false;
        for b in 0..n_batches {
            for _ in 0..rng.random_range(1..=3) {
                let pages: Vec<u32> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(1..=doc.n_pages)).collect();
                requested.extend(&pages);
                requests += 1;
                script.push(call(GET_CHUNKS_BY_PAGE, json!({ "pages": pages })));
            }
            if rng.random_bool(0.3) {
                searched = true;
                script.push(call(SEARCH_CHUNKS, json!({"query": "median overall survival months"})));
            }
            script.push(call(
                SUBMIT_EXTRACTION,
                json!({"entries": [{"column_id": format!("col{b}"), "value": "Not reported", "reasoning": "", "attribution": null}]}),
            ));
        }
        let backend = ScriptedBackend::new(script);
        let ledger = UsageLedger::new();
        let ctx = AgentContext {
            backend: &backend,
            ledger: &ledger,
            clock: &clock,
            prompts: &prompts,
            retry_limit: 0,
        };
        let cache = SessionCache::new(doc.doc_id.clone());
        let mut session = AgentBSession::new(ToolContext::new(&doc, &index, &embedder, &cache));
        for b in 0..n_batches {
            let outcome = session.run_batch(&batch(b), &ctx);
            ensure(outcome.error.is_none(), || format!("session {s} batch {b}: {:?}", outcome.error))?;
        }
        ensure(backend.remaining() == 0, || format!("session {s}: script not consumed"))?;

        let sent = delivered(session.transcript());
        let mut once = BTreeSet::new();
        for (page, content) in &sent {
            ensure(once.insert(*page), || format!("session {s}: page {page} delivered twice"))?;
            ensure(*content == get_page(&doc, *page).unwrap().text, || format!("session {s}: page {page} content differs"))?;
        }
        let stats = cache.stats();
        let provided = cache.provided_pages();
        if !searched {
            ensure(provided == requested, || format!("session {s}: provided {provided:?}, requested {requested:?}"))?;
        }
        ensure(provided == once, || format!("session {s}: cache {provided:?} vs transcript {once:?}"))?;
        let distinct_sum: usize = provided.iter().map(|p| page_chars[p]).sum();
        ensure(stats.transmitted_chars == distinct_sum, || {
            format!("session {s}: transmitted {} chars, distinct pages sum to {distinct_sum}", stats.transmitted_chars)
        })?;
        ensure(stats.distinct_pages == provided.len(), || format!("session {s}: distinct page count"))?;
        pointers += stats.pointers_returned;
    }
    ensure(pointers > 0, || "no overlapping request was exercised".into())?;
    Ok(format!("{SESSIONS} sessions, {requests} page requests, {pointers} cache pointers"))
}
