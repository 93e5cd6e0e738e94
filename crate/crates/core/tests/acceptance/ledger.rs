use std::collections::BTreeSet;

use evtab_core::backend::mock::MockBackend;
use evtab_core::backend::{AgentRole, CallOutcome, ContentPart, Turn};
use evtab_core::docmodel::{get_page, render_markdown};
use evtab_core::pipeline::{check_call_identity, DocumentRun, PipelineMode};

use super::cache::delivered;
use super::fixtures::{document, ensure, run_with, schema, Flaky, Recording};

fn identity(run: &DocumentRun, what: &str) -> Result<(u64, u64), String> {
    let c = &run.manifest.counts;
    let calls = run.ledger.len() as u64;
    ensure(calls == run.manifest.ledger.total.api_calls, || format!("{what}: manifest total disagrees with ledger"))?;
    // every term recounted from the ledger itself
    let first_turns = |agent| run.ledger.iter().filter(|r| r.agent == agent && r.turn == 0 && r.attempt == 0).count() as u64;
    let retries = run.ledger.iter().filter(|r| r.attempt > 0).count() as u64;
    let later_turns = run.ledger.iter().filter(|r| r.turn > 0 && r.attempt == 0).count() as u64;
    ensure(first_turns(AgentRole::AgentA) == c.batches as u64, || format!("{what}: agent A calls"))?;
    ensure(first_turns(AgentRole::AgentB) == c.batches as u64, || format!("{what}: agent B first turns"))?;
    ensure(first_turns(AgentRole::Reconciler) == c.pass2_invocations as u64, || format!("{what}: pass-2 invocations"))?;
    ensure(retries == c.retries as u64, || format!("{what}: {retries} retry records vs {} counted", c.retries))?;
    ensure(later_turns == c.follow_up_turns as u64, || format!("{what}: follow-up turns"))?;
    check_call_identity(&run.manifest).map_err(|e| format!("{what}: {e}"))?;
    let without_follow_ups = 2 * c.batches as u64 + c.pass2_invocations as u64 + c.retries as u64;
    Ok((calls, without_follow_ups))
}

pub fn check() -> Result<String, String> {
    let doc = document();
    let schema = schema();

    let backend = Recording::new(MockBackend::new());
    let run = run_with(&doc, &schema, &backend, PipelineMode::Full);
    let (calls, short) = identity(&run, "mock run")?;

    let flaky = Flaky::new(MockBackend::new());
    let retried = run_with(&doc, &schema, &flaky, PipelineMode::Full);
    identity(&retried, "retrying run")?;
    ensure(retried.manifest.counts.retries >= 2, || "injected failures were not retried".into())?;
    ensure(retried.cells == run.cells, || "retries changed the reconciled cells".into())?;

    // Agent A carries the whole document on every call
    let markdown = render_markdown(&doc);
    let doc_tokens = markdown.split_whitespace().count() as u64;
    let requests = backend.requests();
    let a_requests: Vec<_> = requests.iter().filter(|r| r.tag.agent == AgentRole::AgentA).collect();
    ensure(a_requests.len() == run.manifest.counts.batches as usize, || "agent A request count".into())?;
    for r in &a_requests {
        let has_doc = r.turns.iter().any(|t| match t {
            Turn::User { parts } => parts.iter().any(|p| matches!(p, ContentPart::Document { markdown: m, .. } if *m == markdown)),
            _ => false,
        });
        ensure(has_doc, || format!("agent A batch {:?} lacks the document", r.tag.batch_id))?;
    }
    for rec in run.ledger.iter().filter(|r| r.agent == AgentRole::AgentA) {
        ensure(rec.input_tokens >= doc_tokens, || format!("{}: {} input tokens < {doc_tokens} document tokens", rec.call_id, rec.input_tokens))?;
    }

    // Agent B never holds a page's content twice, so its context grows by at
    // most the distinct pages it read
    let b_requests: Vec<_> = requests.iter().filter(|r| r.tag.agent == AgentRole::AgentB).collect();
    for r in &b_requests {
        let pages = delivered(&r.turns);
        let distinct: BTreeSet<u32> = pages.iter().map(|(p, _)| *p).collect();
        ensure(distinct.len() == pages.len(), || format!("agent B turn {} holds a page twice", r.tag.turn))?;
    }
    let last = b_requests.last().ok_or("no agent B request")?;
    let cache = run.cache.as_ref().ok_or("full run without cache stats")?;
    let held: usize = delivered(&last.turns).iter().map(|(_, c)| c.chars().count()).sum();
    let distinct_sum: usize = cache
        .transmissions
        .iter()
        .map(|t| get_page(&doc, t.page).unwrap().text.chars().count())
        .sum();
    ensure(held <= cache.transmitted_chars && cache.transmitted_chars == distinct_sum, || {
        format!("context holds {held} page chars, cache sent {}, distinct pages {distinct_sum}", cache.transmitted_chars)
    })?;
    let b_tokens: Vec<u64> = run.ledger.iter().filter(|r| r.agent == AgentRole::AgentB).map(|r| r.input_tokens).collect();
    let growth = b_tokens.last().unwrap() - b_tokens.first().unwrap();
    let failed_turns = run.ledger.iter().filter(|r| matches!(r.outcome, CallOutcome::Invalid { .. })).count();

    Ok(format!(
        "{calls} calls = 2x{} batches + {} pass-2 + {} follow-up turns + {} retries (literal formula without follow-ups gives {short}); \
         retrying run adds {} retries; agent A >= {doc_tokens} doc tokens on {} calls; agent B context {} -> {} tokens, \
         {} distinct pages, {} pointers, {failed_turns} invalid turns",
        run.manifest.counts.batches,
        run.manifest.counts.pass2_invocations,
        run.manifest.counts.follow_up_turns,
        run.manifest.counts.retries,
        retried.manifest.counts.retries,
        a_requests.len(),
        b_tokens.first().unwrap(),
        b_tokens.first().unwrap() + growth,
        cache.distinct_pages,
        cache.pointers_returned,
    ))
}
