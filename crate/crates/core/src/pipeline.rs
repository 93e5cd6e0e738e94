//! End-to-end extraction for one document.
//!
//! In `full` mode Agent A batches run in parallel while Agent B works
//! through the batches in one continuous session; reconciliation then runs
//! per batch in parallel. The baseline modes run a single document-query
//! agent and skip reconciliation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    run_agent_a, run_parsed_single, AgentBSession, AgentContext, BatchOutcome, CacheStats, Extraction, SessionCache,
    ToolContext, DEFAULT_MAX_TURNS,
};
use crate::backend::{ModelBackend, UsageLedger, UsageRecord, DEFAULT_RETRY_LIMIT};
use crate::clock::Clock;
use crate::docmodel::ParsedDocument;
use crate::evaluation::Prediction;
use crate::prompts::PromptSet;
use crate::reconciler::{reconcile_batch, Pass, ReconcileOutcome, ReconciledCell};
use crate::retrieval::{build_index, EmbeddingProvider, RetrievalError, DEFAULT_TOP_K};
use crate::schema::{pack_batches, ColumnBatch, Schema, DEFAULT_BATCH_LIMIT};
use crate::store::{BatchSummary, RunCounts, RunFlags, RunManifest};

pub const DEFAULT_RECONCILER_MAX_TURNS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Both agents plus reconciliation.
    Full,
    /// Agent A alone, reading the original file when the backend allows it.
    AgentAOnly,
    /// One model over the rendered markdown.
    ParsedSingle,
}

impl PipelineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Full => "full",
            PipelineMode::AgentAOnly => "agent_a_only",
            PipelineMode::ParsedSingle => "parsed_single",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(PipelineMode::Full),
            "agent_a_only" => Ok(PipelineMode::AgentAOnly),
            "parsed_single" => Ok(PipelineMode::ParsedSingle),
            other => Err(format!("unknown mode `{other}` (expected full, agent_a_only or parsed_single)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub mode: PipelineMode,
    pub batch_limit: usize,
    pub top_k: usize,
    pub agent_b_max_turns: u32,
    pub reconciler_max_turns: u32,
    pub max_in_flight: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Full,
            batch_limit: DEFAULT_BATCH_LIMIT,
            top_k: DEFAULT_TOP_K,
            agent_b_max_turns: DEFAULT_MAX_TURNS,
            reconciler_max_turns: DEFAULT_RECONCILER_MAX_TURNS,
            max_in_flight: 4,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Options(m.to_string()));
        if self.batch_limit == 0 {
            return bad("batch_limit must be at least 1");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.agent_b_max_turns == 0 || self.reconciler_max_turns == 0 {
            return bad("turn limits must be at least 1");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid options: {0}")]
    Options(String),
    #[error("schema has no columns")]
    EmptySchema,
    #[error("indexing `{doc_id}` failed: {source}")]
    Index {
        doc_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Everything a run needs besides the document.
pub struct Pipeline<'a> {
    pub schema: &'a Schema,
    pub extraction: &'a dyn ModelBackend,
    pub reconciliation: &'a dyn ModelBackend,
    pub embedder: &'a dyn EmbeddingProvider,
    pub prompts: &'a PromptSet,
    pub clock: &'a dyn Clock,
    pub options: PipelineOptions,
    pub retry_limits: RetryLimits,
}

/// Extra attempts allowed per call, per backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryLimits {
    pub extraction: u32,
    pub reconciliation: u32,
}

impl Default for RetryLimits {
    fn default() -> Self {
        Self {
            extraction: DEFAULT_RETRY_LIMIT,
            reconciliation: DEFAULT_RETRY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRun {
    pub doc_id: String,
    pub mode: PipelineMode,
    /// Reconciled cells in schema order; empty for baseline modes.
    pub cells: Vec<ReconciledCell>,
    /// The scored value per column, in schema order.
    pub predictions: Vec<Prediction>,
    pub manifest: RunManifest,
    pub ledger: Vec<UsageRecord>,
    pub cache: Option<CacheStats>,
}

fn summaries(batches: &[ColumnBatch]) -> Vec<BatchSummary> {
    batches
        .iter()
        .map(|b| BatchSummary {
            batch_id: b.batch_id,
            column_ids: b.columns.iter().map(|c| c.id.clone()).collect(),
            source_groups: b.source_groups.clone(),
        })
        .collect()
}

fn failed_count(outcomes: &[BatchOutcome]) -> u32 {
    outcomes.iter().flat_map(|o| &o.extractions).filter(|e| e.failed).count() as u32
}

impl Pipeline<'_> {
    fn context<'c>(&'c self, backend: &'c dyn ModelBackend, ledger: &'c UsageLedger, retry_limit: u32) -> AgentContext<'c> {
        AgentContext {
            backend,
            ledger,
            clock: self.clock,
            prompts: self.prompts,
            retry_limit,
        }
    }

    pub fn run_document(&self, doc: &ParsedDocument) -> Result<DocumentRun, PipelineError> {
        self.options.validate()?;
        if self.schema.columns.is_empty() {
            return Err(PipelineError::EmptySchema);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.options.max_in_flight)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        let started_at = self.clock.now();
        let batches = pack_batches(self.schema, self.options.batch_limit);
        tracing::info!(doc = %doc.doc_id, mode = %self.options.mode, batches = batches.len(), "extracting");
        let ledger = UsageLedger::new();
        let (cells, predictions, counts, cache) = match self.options.mode {
            PipelineMode::Full => pool.install(|| self.run_full(doc, &batches, &ledger))?,
            mode => pool.install(|| self.run_single(doc, &batches, &ledger, mode)),
        };
        let records = ledger.records();
        let manifest = RunManifest {
            doc_id: doc.doc_id.clone(),
            run_version: 0,
            schema_name: self.schema.name.clone(),
            schema_version: self.schema.version.clone(),
            mode: self.options.mode.as_str().to_string(),
            extraction_backend: self.extraction.name().to_string(),
            reconciliation_backend: match self.options.mode {
                PipelineMode::Full => self.reconciliation.name().to_string(),
                _ => String::new(),
            },
            prompt_version: self.prompts.version.clone(),
            columns: self.schema.columns.clone(),
            batches: summaries(&batches),
            started_at,
            completed_at: self.clock.now(),
            ledger: crate::backend::ledger_report(&records),
            counts,
            flags: RunFlags {
                page_images_available: doc.has_page_images(),
                agent_a_markdown_fallback: match self.options.mode {
                    PipelineMode::ParsedSingle => true,
                    _ => doc.source_pdf.is_none() || !self.extraction.accepts_native_documents(),
                },
            },
        };
        Ok(DocumentRun {
            doc_id: doc.doc_id.clone(),
            mode: self.options.mode,
            cells,
            predictions,
            manifest,
            ledger: records,
            cache,
        })
    }

    #[allow(clippy::type_complexity)]
    fn run_full(
        &self,
        doc: &ParsedDocument,
        batches: &[ColumnBatch],
        ledger: &UsageLedger,
    ) -> Result<(Vec<ReconciledCell>, Vec<Prediction>, RunCounts, Option<CacheStats>), PipelineError> {
        let index = build_index(doc, self.embedder).map_err(|source| PipelineError::Index {
            doc_id: doc.doc_id.clone(),
            source,
        })?;
        let cache = SessionCache::new(doc.doc_id.clone());
        let extract_ctx = self.context(self.extraction, ledger, self.retry_limits.extraction);
        let (outcomes_a, outcomes_b) = rayon::join(
            || batches.par_iter().map(|b| run_agent_a(doc, b, &extract_ctx)).collect::<Vec<_>>(),
            || {
                let mut tools = ToolContext::new(doc, &index, self.embedder, &cache);
                tools.top_k = self.options.top_k;
                let mut session = AgentBSession::new(tools);
                session.max_turns = self.options.agent_b_max_turns;
                batches.iter().map(|b| session.run_batch(b, &extract_ctx)).collect::<Vec<_>>()
            },
        );
        let reconcile_ctx = self.context(self.reconciliation, ledger, self.retry_limits.reconciliation);
        let reconciled: Vec<ReconcileOutcome> = batches
            .par_iter()
            .zip(outcomes_a.par_iter().zip(outcomes_b.par_iter()))
            .map(|(batch, (a, b))| {
                reconcile_batch(batch, &a.extractions, &b.extractions, doc, &reconcile_ctx, self.options.reconciler_max_turns)
            })
            .collect();

        let mut by_column: std::collections::HashMap<String, ReconciledCell> = reconciled
            .iter()
            .flat_map(|r| r.cells.iter().cloned())
            .map(|c| (c.column_id.clone(), c))
            .collect();
        let cells: Vec<ReconciledCell> = self
            .schema
            .columns
            .iter()
            .filter_map(|c| by_column.remove(&c.id))
            .collect();
        let predictions = cells
            .iter()
            .map(|c| Prediction {
                column_id: c.column_id.clone(),
                value: c.final_value.clone(),
                failed: c.inputs.a.failed && c.inputs.b.failed,
                attribution: c.attribution.clone(),
            })
            .collect();

        let sum = |f: &dyn Fn(&ReconcileOutcome) -> u32| reconciled.iter().map(f).sum::<u32>();
        let pass2_invocations = sum(&|r| r.pass2_invocations);
        let follow_up_b: u32 = outcomes_b.iter().map(|o| o.turns.saturating_sub(1)).sum();
        let follow_up_r = sum(&|r| r.turns) - pass2_invocations;
        let retries = outcomes_a.iter().chain(&outcomes_b).map(BatchOutcome::retries).sum::<u32>()
            + sum(&|r| r.retries());
        let counts = RunCounts {
            batches: batches.len() as u32,
            pass1_cells: cells.iter().filter(|c| c.pass == Pass::Pass1).count() as u32,
            pass2_cells: cells.iter().filter(|c| c.pass == Pass::Pass2).count() as u32,
            pass2_invocations,
            forced_tool_rejections: sum(&|r| r.forced_tool_rejections),
            follow_up_turns: follow_up_b + follow_up_r,
            retries,
            failed_extractions: failed_count(&outcomes_a) + failed_count(&outcomes_b),
        };
        for o in outcomes_a.iter().chain(&outcomes_b) {
            if let Some(e) = &o.error {
                tracing::warn!(doc = %doc.doc_id, error = %e, "batch extraction failed");
            }
        }
        Ok((cells, predictions, counts, Some(cache.stats())))
    }

    #[allow(clippy::type_complexity)]
    fn run_single(
        &self,
        doc: &ParsedDocument,
        batches: &[ColumnBatch],
        ledger: &UsageLedger,
        mode: PipelineMode,
    ) -> (Vec<ReconciledCell>, Vec<Prediction>, RunCounts, Option<CacheStats>) {
        let ctx = self.context(self.extraction, ledger, self.retry_limits.extraction);
        let outcomes: Vec<BatchOutcome> = batches
            .par_iter()
            .map(|b| match mode {
                PipelineMode::ParsedSingle => run_parsed_single(doc, b, &ctx),
                _ => run_agent_a(doc, b, &ctx),
            })
            .collect();
        let mut by_column: std::collections::HashMap<&str, &Extraction> = outcomes
            .iter()
            .flat_map(|o| &o.extractions)
            .map(|e| (e.column_id.as_str(), e))
            .collect();
        let predictions = self
            .schema
            .columns
            .iter()
            .filter_map(|c| by_column.remove(c.id.as_str()))
            .map(Prediction::from_extraction)
            .collect();
        let counts = RunCounts {
            batches: batches.len() as u32,
            retries: outcomes.iter().map(BatchOutcome::retries).sum(),
            failed_extractions: failed_count(&outcomes),
            ..RunCounts::default()
        };
        (Vec::new(), predictions, counts, None)
    }
}

/// Checks the call-count identity
/// `api_calls = 2 * batches + pass2_invocations + follow_up_turns + retries`
/// for a full-mode run.
pub fn check_call_identity(manifest: &RunManifest) -> Result<(), String> {
    let c = &manifest.counts;
    let expected = 2 * c.batches as u64 + c.pass2_invocations as u64 + c.follow_up_turns as u64 + c.retries as u64;
    let actual = manifest.ledger.total.api_calls;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("ledger has {actual} calls but the counts imply {expected}"))
    }
}
