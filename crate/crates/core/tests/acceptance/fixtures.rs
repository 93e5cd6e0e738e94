use std::collections::HashSet;
use std::sync::Mutex;

use evtab_core::backend::mock::MockBackend;
use evtab_core::backend::{ModelBackend, ModelRequest, RawReply, TransportError};
use evtab_core::clock::FixedClock;
use evtab_core::docmodel::{load_document, ParsedDocument};
use evtab_core::evaluation::{load_gold, GoldSet};
use evtab_core::pipeline::{DocumentRun, Pipeline, PipelineMode, PipelineOptions, RetryLimits};
use evtab_core::prompts::PromptSet;
use evtab_core::retrieval::HashEmbedder;
use evtab_core::schema::{load_schema, Schema};

pub fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

pub fn document() -> ParsedDocument {
    load_document(include_str!("../fixtures/trial_document.json")).expect("fixture document")
}

pub fn schema() -> Schema {
    load_schema(include_str!("../fixtures/trial_schema.json")).expect("fixture schema")
}

pub fn gold() -> GoldSet {
    load_gold(include_str!("../fixtures/trial_gold.json")).expect("fixture gold")
}

/// Wraps a backend and keeps every request it forwards.
pub struct Recording<B> {
    pub inner: B,
    pub seen: Mutex<Vec<ModelRequest>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl<B: ModelBackend> ModelBackend for Recording<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

/// Fails the first attempt of every first turn of batch 1 with a
/// retryable transport error.
pub struct Flaky<B> {
    pub inner: B,
    failed: Mutex<HashSet<String>>,
}

impl<B> Flaky<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            failed: Mutex::new(HashSet::new()),
        }
    }
}

impl<B: ModelBackend> ModelBackend for Flaky<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ModelRequest) -> Result<RawReply, TransportError> {
        let tag = &request.tag;
        if tag.batch_id == Some(1) && tag.turn == 0 {
            let key = format!("{}:{:?}", tag.agent.as_str(), tag.batch_id);
            if self.failed.lock().unwrap().insert(key) {
                return Err(TransportError::retryable("injected timeout"));
            }
        }
        self.inner.complete(request)
    }
}

pub fn run_with(doc: &ParsedDocument, schema: &Schema, backend: &dyn ModelBackend, mode: PipelineMode) -> DocumentRun {
    let embedder = HashEmbedder::new(32);
    let prompts = PromptSet::default();
    let clock = FixedClock::default();
    let pipeline = Pipeline {
        schema,
        extraction: backend,
        reconciliation: backend,
        embedder: &embedder,
        prompts: &prompts,
        clock: &clock,
        options: PipelineOptions {
            mode,
            ..PipelineOptions::default()
        },
        retry_limits: RetryLimits::default(),
    };
    pipeline.run_document(doc).expect("pipeline run")
}

pub fn run_mock(doc: &ParsedDocument, schema: &Schema) -> DocumentRun {
    run_with(doc, schema, &MockBackend::new(), PipelineMode::Full)
}
